"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 external tool failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .filters import FilterChain, apply_chain, filter_kinds, schema_for
from .frameio import read_y4m_file, write_y4m_file
from .metrics import ExternalToolError, MetricAdapter, score_sequence
from .optimize import GAConfig, KernelTrainConfig, history_csv
from .pipeline import (
    DEFAULT_BITRATES_KBPS,
    DEFAULT_TUNING_FRAMES,
    DEFAULT_VERIFY_FRAMES,
    EncoderAdapter,
    GainReport,
    TuningJob,
    emit_rd_csv,
    run_compressed_eval,
    tune_preprocessing,
)
from .report import build_gain_table, summarize_gains
from .subjective import bt_fit, read_votes_csv, read_votes_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOOL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config files ----------------------------------------------------------

def _scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | Path) -> dict:
    """Read a JSON object, or ``key=value`` lines with dotted keys for nesting."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    cfg: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _scalar(value)
    return cfg


def _job_from_config(cfg: dict, seed: int | None, jobs: int | None) -> TuningJob:
    if "input" not in cfg:
        raise UsageError("config needs an 'input' path")
    template = cfg.get("filter", cfg.get("chain", []))
    if isinstance(template, str):
        template = [t for t in template.replace("+", ",").split(",") if t]
    for kind in template:
        schema_for(kind)
    ga = dict(cfg.get("ga", {}))
    kernel = dict(cfg.get("kernel", {}))
    top_seed = cfg.get("seed") if seed is None else seed
    if top_seed is not None:
        ga["seed"] = kernel["seed"] = int(top_seed)
    input_path = Path(cfg["input"])
    seq = read_y4m_file(input_path)
    # an explicit tuning_frames is validated as given; only the default adapts to short clips
    frames = int(cfg.get("tuning_frames", min(DEFAULT_TUNING_FRAMES, len(seq))))
    return TuningJob(
        input=seq,
        template=template,
        adapter=MetricAdapter.from_json(cfg.get("metric", {"kind": "builtin_psnr"})),
        tuning_frames=frames,
        ga=GAConfig.from_json(ga),
        kernel=KernelTrainConfig.from_json(kernel),
        workers=int(jobs if jobs is not None else cfg.get("jobs", 1)),
        video=str(cfg.get("video", input_path.stem)),
    )


def _write(text: str, dest: str | None) -> None:
    if dest is None or dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- subcommands -----------------------------------------------------------

def cmd_apply(args) -> int:
    chain = FilterChain.from_json(json.loads(Path(args.spec).read_text()))
    write_y4m_file(args.output, apply_chain(read_y4m_file(args.input), chain))
    return EXIT_OK


def _adapter_from_args(args) -> MetricAdapter:
    if args.metric_config:
        return MetricAdapter.from_json(load_config(args.metric_config))
    if args.command:
        return MetricAdapter.external(args.command, json_pointer=args.json_pointer)
    return MetricAdapter.from_json({"kind": args.metric})


def cmd_score(args) -> int:
    adapter = _adapter_from_args(args)
    score = score_sequence(adapter, read_y4m_file(args.ref), read_y4m_file(args.dist))
    _write(_dump(score.to_json()), args.output)
    return EXIT_OK


def cmd_tune(args) -> int:
    job = _job_from_config(load_config(args.config), args.seed, args.jobs)
    report = tune_preprocessing(job)
    _write(_dump(report.to_json()), args.output)
    if args.history:
        Path(args.history).write_text(history_csv(report.history))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    job = _job_from_config(cfg, args.seed, args.jobs)
    if "encoder" not in cfg:
        raise UsageError("pipeline config needs an 'encoder' section")
    encoder = EncoderAdapter.from_json(cfg["encoder"])
    report = tune_preprocessing(job)
    points = run_compressed_eval(
        job.input,
        report.best_params,
        job.adapter,
        encoder,
        bitrates_kbps=cfg.get("bitrates", list(DEFAULT_BITRATES_KBPS)),
        frames=int(cfg.get("frames", DEFAULT_VERIFY_FRAMES)),
        workers=job.workers,
        retune=job if cfg.get("retune") else None,
    )
    _write(_dump(report.to_json()), args.output)
    rd = emit_rd_csv(points)
    if args.rd:
        Path(args.rd).write_text(rd)
    else:
        sys.stdout.write(rd)
    return EXIT_OK


def cmd_btrank(args) -> int:
    text = Path(args.votes).read_text()
    votes = read_votes_json(text) if text.lstrip().startswith("{") else read_votes_csv(text)
    scores = bt_fit(votes, tol=args.tol, max_iter=args.max_iter, prior=args.prior)
    _write(_dump(scores.to_json()), args.output)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [GainReport.from_json(json.loads(Path(p).read_text())) for p in args.reports]
    table = build_gain_table((r.video, r.method, r) for r in reports)
    by_method: dict[str, list[float]] = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r.gain_rel_pct)
    out = {
        "table": table.to_json(),
        "summary": {m: summarize_gains(v).to_json() for m, v in by_method.items()},
    }
    if reports:
        out["summary_all"] = summarize_gains([r.gain_rel_pct for r in reports]).to_json()
    _write(_dump(out), args.output)
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    return EXIT_OK


def cmd_schemas(args) -> int:
    _write(_dump({k: schema_for(k).to_json() for k in filter_kinds()}), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vqhack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command_name", required=True, parser_class=_Parser)

    p = sub.add_parser("apply", help="apply a filter spec/chain to a Y4M file")
    p.add_argument("--spec", required=True, help="FilterSpec or FilterChain JSON")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("score", help="score a distorted Y4M against a reference")
    p.add_argument("ref")
    p.add_argument("dist")
    p.add_argument("--metric", default="psnr", choices=["psnr", "ssim", "builtin_psnr", "builtin_ssim"])
    p.add_argument("--command", help="external metric template with {ref} and {dist}")
    p.add_argument("--json-pointer", help="read the score from stdout JSON at this pointer")
    p.add_argument("--metric-config", help="MetricAdapter config file")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_score)

    for name, func, help_ in (
        ("tune", cmd_tune, "tune filter parameters on the first frames"),
        ("pipeline", cmd_pipeline, "tune, then verify through an encoder at several bitrates"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON or key=value config")
        p.add_argument("-o", "--output", help="GainReport JSON destination (default stdout)")
        p.add_argument("--seed", type=int, help="override optimizer seeds")
        p.add_argument("--jobs", type=int, help="concurrent fitness evaluations")
        if name == "tune":
            p.add_argument("--history", help="write optimizer history CSV here")
        else:
            p.add_argument("--rd", help="write RD CSV here (default stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("btrank", help="Bradley-Terry ranking of pairwise votes")
    p.add_argument("votes", help="CSV (winner_label,loser_label,count) or JSON matrix")
    p.add_argument("--prior", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_btrank)

    p = sub.add_parser("report", help="aggregate GainReport JSON files")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("--csv", help="also write the gain table as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("schemas", help="list filter kinds and parameter bounds")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_schemas)
    return parser


def _is_tool_failure(exc: BaseException | None) -> bool:
    while exc is not None:
        if isinstance(exc, ExternalToolError):
            return True
        exc = exc.__cause__
    return False


def _first_line(exc: BaseException) -> str:
    text = str(exc)
    return text.splitlines()[0] if text else type(exc).__name__


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vqhack: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        if _is_tool_failure(exc):
            print(f"vqhack: external tool failed: {_first_line(exc)}", file=sys.stderr)
            return EXIT_TOOL
        if isinstance(exc, (ValueError, KeyError, OSError, json.JSONDecodeError, RuntimeError)):
            print(f"vqhack: {_first_line(exc)}", file=sys.stderr)
            return EXIT_DATA
        raise


if __name__ == "__main__":
    sys.exit(main())
