"""Full-reference scoring: built-in PSNR/SSIM and external metric commands."""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .filters import gaussian_kernel_1d
from .frameio import VideoSequence, write_y4m_file

__all__ = [
    "MetricError",
    "ExternalToolError",
    "MetricScore",
    "MetricAdapter",
    "psnr_frame",
    "ssim_frame",
    "score_sequence",
    "render_command",
    "run_command",
]

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2, SSIM_L = 0.01, 0.03, 255.0


class MetricError(ValueError):
    """Bad metric input (dimension or frame-count mismatch, unparseable output)."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class ExternalToolError(RuntimeError):
    """An external command exited nonzero. Carries the captured output."""

    def __init__(self, message: str, output: str = "", returncode: int | None = None):
        super().__init__(message)
        self.output = output
        self.returncode = returncode


@dataclass(frozen=True)
class MetricScore:
    per_frame: tuple[float, ...]
    pooled: float

    @classmethod
    def from_frames(cls, per_frame: Sequence[float]) -> "MetricScore":
        per_frame = tuple(float(x) for x in per_frame)
        if not per_frame:
            raise ValueError("per_frame must be nonempty")
        return cls(per_frame, math.fsum(per_frame) / len(per_frame))

    def to_json(self) -> dict:
        return {"per_frame": list(self.per_frame), "pooled": self.pooled}


@dataclass(frozen=True)
class MetricAdapter:
    """How to score a distorted sequence against its reference.

    ``kind`` is ``builtin_psnr``, ``builtin_ssim`` or ``external``. External
    adapters run ``command_template`` with ``{ref}`` and ``{dist}`` replaced by
    Y4M paths and read the score from stdout: either the last line that parses
    as a float, or the value at ``json_pointer`` in stdout parsed as JSON.
    """

    kind: str = "builtin_psnr"
    command_template: str | None = None
    parse_mode: str = "last_line_float"
    json_pointer: str | None = None
    higher_is_better: bool = True
    timeout: float | None = None

    def __post_init__(self):
        if self.kind not in ("builtin_psnr", "builtin_ssim", "external"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if not self.higher_is_better:
            raise ValueError("only higher-is-better metrics are supported; negate at the tool boundary")
        if self.kind == "external":
            tpl = self.command_template or ""
            for ph in ("{ref}", "{dist}"):
                if tpl.count(ph) != 1:
                    raise ValueError(f"command template must contain {ph} exactly once")
            if self.parse_mode not in ("last_line_float", "json_pointer"):
                raise ValueError(f"unknown parse mode {self.parse_mode!r}")
            if self.parse_mode == "json_pointer" and self.json_pointer is None:
                raise ValueError("json_pointer parse mode needs a pointer path")

    @classmethod
    def psnr(cls) -> "MetricAdapter":
        return cls("builtin_psnr")

    @classmethod
    def ssim(cls) -> "MetricAdapter":
        return cls("builtin_ssim")

    @classmethod
    def external(cls, command_template: str, json_pointer: str | None = None, **kw) -> "MetricAdapter":
        mode = "json_pointer" if json_pointer is not None else "last_line_float"
        return cls("external", command_template, mode, json_pointer, **kw)

    @classmethod
    def from_json(cls, obj: dict | str) -> "MetricAdapter":
        """Accepts a bare kind name, or a mapping; a mapping with only a command is external."""
        obj = {"kind": obj} if isinstance(obj, str) else dict(obj)
        kind = obj.pop("kind", "external" if "command" in obj or "command_template" in obj else "builtin_psnr")
        aliases = {"psnr": "builtin_psnr", "ssim": "builtin_ssim"}
        kind = aliases.get(kind, kind)
        if "command" in obj:
            obj["command_template"] = obj.pop("command")
        parse = obj.pop("parse", None)
        if isinstance(parse, dict):
            obj["parse_mode"], obj["json_pointer"] = "json_pointer", parse["json_pointer"]
        elif parse is not None:
            obj["parse_mode"] = parse
        return cls(kind, **obj)

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "external":
            d["command"] = self.command_template
            d["parse"] = {"json_pointer": self.json_pointer} if self.parse_mode == "json_pointer" else self.parse_mode
        return d


# -- built-in metrics ------------------------------------------------------

def _pair(ref, dist) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(ref), np.asarray(dist)
    if a.shape != b.shape:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a.astype(float), b.astype(float)


def psnr_frame(ref, dist) -> float:
    """Luma PSNR in dB, capped at 100 dB (identical planes hit the cap)."""
    a, b = _pair(ref, dist)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(SSIM_L**2 / mse))


def _valid_filter(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    n = len(k)
    h, w = x.shape
    rows = np.zeros((h, w - n + 1))
    for t in range(n):
        rows += k[t] * x[:, t:t + w - n + 1]
    out = np.zeros((h - n + 1, w - n + 1))
    for t in range(n):
        out += k[t] * rows[t:t + h - n + 1, :]
    return out


def ssim_frame(ref, dist) -> float:
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), valid positions only."""
    a, b = _pair(ref, dist)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise MetricError(f"planes must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    k = gaussian_kernel_1d(SSIM_SIGMA)
    assert len(k) == SSIM_WINDOW
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    mu_a, mu_b = _valid_filter(a, k), _valid_filter(b, k)
    var_a = _valid_filter(a * a, k) - mu_a * mu_a
    var_b = _valid_filter(b * b, k) - mu_b * mu_b
    cov = _valid_filter(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


_BUILTINS = {"builtin_psnr": psnr_frame, "builtin_ssim": ssim_frame}


# -- external tools --------------------------------------------------------

def render_command(template: str, **values) -> list[str]:
    """Split a template shell-style and substitute ``{name}`` placeholders per token."""
    argv = []
    for tok in shlex.split(template):
        for k, v in values.items():
            tok = tok.replace("{" + k + "}", str(v))
        argv.append(tok)
    return argv


def run_command(argv: list[str], cwd: str | None = None, timeout: float | None = None) -> str:
    try:
        proc = subprocess.run(argv, cwd=cwd, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError as exc:
        raise ExternalToolError(f"command not found: {argv[0]}", str(exc)) from exc
    except subprocess.TimeoutExpired as exc:
        raise ExternalToolError(f"command timed out after {timeout}s: {argv[0]}", str(exc.output or "")) from exc
    if proc.returncode != 0:
        raise ExternalToolError(
            f"{argv[0]} exited with status {proc.returncode}",
            proc.stdout + proc.stderr,
            proc.returncode,
        )
    return proc.stdout


def _resolve_pointer(doc, pointer: str):
    if pointer in ("", "/"):
        return doc
    if not pointer.startswith("/"):
        raise MetricError(f"JSON pointer must start with '/': {pointer!r}")
    for raw in pointer[1:].split("/"):
        key = raw.replace("~1", "/").replace("~0", "~")
        if isinstance(doc, list):
            doc = doc[int(key)]
        else:
            doc = doc[key]
    return doc


def parse_metric_output(stdout: str, adapter: MetricAdapter) -> float:
    if adapter.parse_mode == "json_pointer":
        try:
            value = float(_resolve_pointer(json.loads(stdout), adapter.json_pointer))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MetricError(f"cannot read {adapter.json_pointer} from metric output: {exc}", stdout) from None
    else:
        value = None
        for line in reversed(stdout.splitlines()):
            try:
                value = float(line.strip())
                break
            except ValueError:
                continue
        if value is None:
            raise MetricError("metric output has no line parsing as a float", stdout)
    if not math.isfinite(value):
        raise MetricError(f"metric returned non-finite score {value}", stdout)
    return value


def _score_external(adapter: MetricAdapter, ref: VideoSequence, dist: VideoSequence) -> MetricScore:
    with tempfile.TemporaryDirectory(prefix="vqhack-metric-") as work:
        ref_path = os.path.join(work, "ref.y4m")
        dist_path = os.path.join(work, "dist.y4m")
        write_y4m_file(ref_path, ref)
        write_y4m_file(dist_path, dist)
        argv = render_command(adapter.command_template, ref=ref_path, dist=dist_path)
        stdout = run_command(argv, cwd=work, timeout=adapter.timeout)
    pooled = parse_metric_output(stdout, adapter)
    return MetricScore((pooled,), pooled)


def score_sequence(adapter: MetricAdapter, ref: VideoSequence, dist: VideoSequence) -> MetricScore:
    if len(ref) != len(dist):
        raise MetricError(f"frame count mismatch: {len(ref)} vs {len(dist)}")
    if (ref.width, ref.height) != (dist.width, dist.height):
        raise MetricError(
            f"dimension mismatch: {ref.width}x{ref.height} vs {dist.width}x{dist.height}"
        )
    if adapter.kind == "external":
        return _score_external(adapter, ref, dist)
    fn = _BUILTINS[adapter.kind]
    return MetricScore.from_frames([fn(r.luma, d.luma) for r, d in zip(ref.frames, dist.frames)])
