"""Tuning loop (filter -> metric vs. GT) and its compressed-stream verification."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .filters import FilterChain, FilterSpec, Kernel, ParamEntry, ParamSchema, apply_chain, schema_for
from .frameio import VideoSequence, extend_sequence, read_y4m_file, write_y4m_file
from .metrics import MetricAdapter, render_command, run_command, score_sequence
from .optimize import FitnessFunction, GAConfig, KernelTrainConfig, ga_optimize, train_kernel

__all__ = [
    "DEFAULT_BITRATES_KBPS",
    "PipelineError",
    "ChainTemplate",
    "TuningJob",
    "GainReport",
    "EncoderAdapter",
    "RDPoint",
    "baseline_score",
    "tune_preprocessing",
    "run_compressed_eval",
    "emit_rd_csv",
    "parse_rd_csv",
]

DEFAULT_BITRATES_KBPS = (2000, 4000, 6000, 8000, 10000)
DEFAULT_TUNING_FRAMES = 10
DEFAULT_VERIFY_FRAMES = 300


class PipelineError(RuntimeError):
    """A job step failed; the original exception is chained as ``__cause__``."""


class ChainTemplate:
    """Filter kinds whose parameters are all free, flattened into one schema.

    Parameter names are ``<kind>.<param>``; a kind appearing twice gets its
    stage index appended (``gamma1.gamma``).
    """

    def __init__(self, kinds: Sequence[str]):
        self.kinds = tuple(kinds)
        seen = [k for k in self.kinds if self.kinds.count(k) > 1]
        self._prefixes = [f"{k}{i}" if k in seen else k for i, k in enumerate(self.kinds)]
        entries = []
        self._slices = []
        for prefix, kind in zip(self._prefixes, self.kinds):
            sub = schema_for(kind)
            start = len(entries)
            entries += [ParamEntry(f"{prefix}.{e.name}", e.min, e.max, e.default, e.integer) for e in sub]
            self._slices.append((kind, sub, slice(start, len(entries))))
        self.schema = ParamSchema(tuple(entries))

    def __len__(self) -> int:
        return len(self.kinds)

    @property
    def label(self) -> str:
        return "+".join(self.kinds) if self.kinds else "identity"

    def chain(self, values: Sequence[float] | None = None) -> FilterChain:
        values = self.schema.defaults if values is None else np.asarray(values, dtype=float)
        return FilterChain(tuple(
            FilterSpec(kind, sub.to_dict(values[sl])) for kind, sub, sl in self._slices
        ))


@dataclass
class TuningJob:
    input: VideoSequence
    template: Sequence[str]
    adapter: MetricAdapter
    tuning_frames: int = DEFAULT_TUNING_FRAMES
    ga: GAConfig = field(default_factory=GAConfig)
    kernel: KernelTrainConfig = field(default_factory=KernelTrainConfig)
    workers: int = 1
    video: str = ""

    def __post_init__(self):
        if isinstance(self.template, str):
            self.template = [self.template]
        self.template = tuple(self.template)
        if not 1 <= self.tuning_frames <= len(self.input):
            raise ValueError(
                f"tuning_frames={self.tuning_frames} must be in [1, {len(self.input)}]"
            )

    @property
    def uses_kernel_trainer(self) -> bool:
        return self.template == ("convolution",)

    @property
    def method(self) -> str:
        return ChainTemplate(self.template).label


@dataclass
class GainReport:
    baseline: float
    tuned_score: float
    best_params: FilterChain | Kernel
    history: list[float] = field(default_factory=list)
    method: str = ""
    video: str = ""

    @property
    def gain_abs(self) -> float:
        return self.tuned_score - self.baseline

    @property
    def gain_rel_pct(self) -> float:
        return 100.0 * self.gain_abs / self.baseline

    def to_json(self) -> dict:
        return {
            "video": self.video,
            "method": self.method,
            "baseline": self.baseline,
            "tuned_score": self.tuned_score,
            "gain_abs": self.gain_abs,
            "gain_rel_pct": self.gain_rel_pct,
            "best_params": self.best_params.to_json(),
            "history": list(self.history),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GainReport":
        params = obj.get("best_params", {"stages": []})
        if params.get("kind") == "convolution" and "weights" in params:
            best = Kernel(params["weights"])
        else:
            best = FilterChain.from_json(params)
        return cls(
            float(obj["baseline"]), float(obj["tuned_score"]), best,
            list(obj.get("history", [])), obj.get("method", ""), obj.get("video", ""),
        )


def baseline_score(seq: VideoSequence, adapter: MetricAdapter, frames: int | None = None) -> float:
    """GT-vs-GT score over the first ``frames`` frames."""
    gt = seq if frames is None else seq.head(frames)
    return score_sequence(adapter, gt, gt).pooled


def _context(job: TuningJob) -> str:
    return f"tuning {job.method} on {job.video or 'input'}"


def _tune(job: TuningJob, score_fn) -> tuple[float, FilterChain | Kernel, list[float]]:
    """Run the job's optimizer with ``score_fn(params) -> pooled score``."""
    if job.uses_kernel_trainer:
        size = job.kernel.size
        fitness = FitnessFunction(lambda w: score_fn(Kernel(w.reshape(size, size))), workers=job.workers)
        res = train_kernel(fitness, job.kernel)
        return res.best_fitness, res.kernel, res.history

    tpl = ChainTemplate(job.template)
    if len(tpl.schema) == 0:
        chain = tpl.chain()
        score = score_fn(chain)
        return score, chain, [score]

    fitness = FitnessFunction(lambda x: score_fn(tpl.chain(x)), budget=job.ga.evaluations, workers=job.workers)
    res = ga_optimize(tpl.schema, fitness, job.ga)
    return res.best_fitness, tpl.chain(res.best), res.history


def tune_preprocessing(job: TuningJob) -> GainReport:
    gt = job.input.head(job.tuning_frames)
    try:
        baseline = baseline_score(gt, job.adapter)
        tuned, best, history = _tune(
            job, lambda params: score_sequence(job.adapter, gt, apply_chain(gt, params)).pooled
        )
    except Exception as exc:
        raise PipelineError(f"{_context(job)}: {exc}") from exc
    return GainReport(baseline, tuned, best, history, job.method, job.video)


# -- compressed verification ----------------------------------------------

@dataclass(frozen=True)
class EncoderAdapter:
    """External encode/decode commands. The decoder must write Y4M."""

    encode_template: str
    decode_template: str
    encoded_suffix: str = ".bin"
    timeout: float | None = None

    def __post_init__(self):
        for ph in ("{input}", "{output}", "{bitrate_kbps}"):
            if self.encode_template.count(ph) != 1:
                raise ValueError(f"encode template must contain {ph} exactly once")
        for ph in ("{input}", "{output}"):
            if self.decode_template.count(ph) != 1:
                raise ValueError(f"decode template must contain {ph} exactly once")

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderAdapter":
        obj = dict(obj)
        obj.setdefault("encode_template", obj.pop("encode", None))
        obj.setdefault("decode_template", obj.pop("decode", None))
        return cls(**obj)

    def roundtrip(self, seq_path: str, bitrate_kbps: int, workdir: str, tag: str) -> VideoSequence:
        encoded = os.path.join(workdir, f"{tag}_{bitrate_kbps}{self.encoded_suffix}")
        decoded = os.path.join(workdir, f"{tag}_{bitrate_kbps}_dec.y4m")
        run_command(
            render_command(self.encode_template, input=seq_path, output=encoded, bitrate_kbps=bitrate_kbps),
            cwd=workdir, timeout=self.timeout,
        )
        run_command(
            render_command(self.decode_template, input=encoded, output=decoded),
            cwd=workdir, timeout=self.timeout,
        )
        return read_y4m_file(decoded)


@dataclass(frozen=True)
class RDPoint:
    bitrate_kbps: int
    score_plain: float
    score_pre: float

    def __post_init__(self):
        if self.bitrate_kbps <= 0:
            raise ValueError("bitrate_kbps must be > 0")

    @property
    def gain(self) -> float:
        return self.score_pre - self.score_plain


def _check_decoded(decoded: VideoSequence, gt: VideoSequence, what: str) -> None:
    if (decoded.width, decoded.height) != (gt.width, gt.height):
        raise PipelineError(
            f"{what}: decoded {decoded.width}x{decoded.height}, expected {gt.width}x{gt.height}"
        )
    if len(decoded) != len(gt):
        raise PipelineError(f"{what}: decoded {len(decoded)} frames, expected {len(gt)}")


def run_compressed_eval(
    seq: VideoSequence,
    best_params: FilterChain | Kernel,
    adapter: MetricAdapter,
    encoder: EncoderAdapter,
    bitrates_kbps: Sequence[int] = DEFAULT_BITRATES_KBPS,
    frames: int = DEFAULT_VERIFY_FRAMES,
    workers: int = 1,
    retune: TuningJob | None = None,
) -> list[RDPoint]:
    """Score compressed GT and compressed preprocessed GT against the raw GT.

    With ``retune`` set, parameters are re-optimized at each bitrate with the
    encoder inside the loop (on the job's tuning frames) instead of reusing
    ``best_params``.
    """
    gt = extend_sequence(seq, frames)

    with tempfile.TemporaryDirectory(prefix="vqhack-rd-") as work:
        gt_path = os.path.join(work, "gt.y4m")
        write_y4m_file(gt_path, gt)

        def one(rate: int) -> RDPoint:
            sub = os.path.join(work, f"r{rate}")
            os.mkdir(sub)
            try:
                plain = encoder.roundtrip(gt_path, rate, sub, "gt")
                _check_decoded(plain, gt, f"GT at {rate} kbps")
                params = best_params if retune is None else _retune_at(retune, encoder, rate, sub)
                pre_path = os.path.join(sub, "pre.y4m")
                write_y4m_file(pre_path, apply_chain(gt, params))
                pre = encoder.roundtrip(pre_path, rate, sub, "pre")
                _check_decoded(pre, gt, f"preprocessed at {rate} kbps")
                return RDPoint(
                    int(rate),
                    score_sequence(adapter, gt, plain).pooled,
                    score_sequence(adapter, gt, pre).pooled,
                )
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(f"compressed evaluation at {rate} kbps: {exc}") from exc

        rates = sorted(int(b) for b in bitrates_kbps)
        if workers > 1 and len(rates) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(one, rates))
        return [one(r) for r in rates]


def _retune_at(job: TuningJob, encoder: EncoderAdapter, rate: int, workdir: str) -> FilterChain | Kernel:
    gt = job.input.head(job.tuning_frames)

    def score(params):
        with tempfile.TemporaryDirectory(dir=workdir) as probe:
            path = os.path.join(probe, "cand.y4m")
            write_y4m_file(path, apply_chain(gt, params))
            decoded = encoder.roundtrip(path, rate, probe, "cand")
        return score_sequence(job.adapter, gt, decoded).pooled

    return _tune(job, score)[1]


def emit_rd_csv(points: Sequence[RDPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bitrate_kbps", "score_plain", "score_pre", "gain"])
    for p in sorted(points, key=lambda p: p.bitrate_kbps):
        writer.writerow([p.bitrate_kbps, f"{p.score_plain:.4f}", f"{p.score_pre:.4f}", f"{p.gain:.4f}"])
    return buf.getvalue()


def parse_rd_csv(text: str) -> list[RDPoint]:
    rows = csv.DictReader(io.StringIO(text))
    return [RDPoint(int(r["bitrate_kbps"]), float(r["score_plain"]), float(r["score_pre"])) for r in rows]
