"""Parameterized luma preprocessing filters and their parameter schemas.

Every plane op takes and returns a 2-D ``uint8`` array of the same shape.
Intermediate arithmetic is float64; results are rounded half away from zero
and clamped to [0, 255] once, at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .frameio import VideoFrame, VideoSequence

__all__ = [
    "ParamEntry",
    "ParamSchema",
    "FilterSpec",
    "FilterChain",
    "Kernel",
    "round_half_away",
    "to_uint8",
    "gamma_correct",
    "linear_contrast",
    "poly_contrast",
    "hist_equalize",
    "clahe",
    "gaussian_kernel_1d",
    "gaussian_blur",
    "unsharp",
    "drago_tonemap",
    "reinhard_tonemap",
    "retinex",
    "convolve",
    "register_filter",
    "filter_kinds",
    "schema_for",
    "kernel_schema",
    "apply_plane",
    "apply_filter",
    "apply_chain",
]

REINHARD_DELTA = 1e-4
DRAGO_WORLD_SCALE = 100.0
RETINEX_SIGMA_SCALE = 16.0
# separable blurs switch to FFT above this radius; gaussian_blur (sigma <= 10) stays direct
_DIRECT_BLUR_MAX_RADIUS = 32


# -- schemas and specs -----------------------------------------------------

@dataclass(frozen=True)
class ParamEntry:
    name: str
    min: float
    max: float
    default: float
    integer: bool = False

    def __post_init__(self):
        if not self.min < self.max:
            raise ValueError(f"{self.name}: min must be < max")
        if not self.min <= self.default <= self.max:
            raise ValueError(f"{self.name}: default outside [{self.min}, {self.max}]")


@dataclass(frozen=True)
class ParamSchema:
    entries: tuple[ParamEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def lower(self) -> np.ndarray:
        return np.array([e.min for e in self.entries], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([e.max for e in self.entries], dtype=float)

    @property
    def defaults(self) -> np.ndarray:
        return np.array([e.default for e in self.entries], dtype=float)

    @property
    def integer_mask(self) -> np.ndarray:
        return np.array([e.integer for e in self.entries], dtype=bool)

    def validate(self, params: Mapping[str, float], where: str = "") -> None:
        prefix = f"{where}: " if where else ""
        extra = set(params) - set(self.names)
        if extra:
            raise ValueError(f"{prefix}unknown parameter(s) {sorted(extra)}")
        for e in self.entries:
            if e.name not in params:
                raise ValueError(f"{prefix}missing parameter {e.name!r}")
            v = float(params[e.name])
            if not (e.min <= v <= e.max):
                raise ValueError(f"{prefix}parameter {e.name}={v} outside [{e.min}, {e.max}]")

    def to_dict(self, values: Sequence[float]) -> dict[str, float]:
        return {e.name: float(v) for e, v in zip(self.entries, values)}

    def to_json(self) -> list[dict]:
        return [
            {"name": e.name, "min": e.min, "max": e.max, "default": e.default, "integer": e.integer}
            for e in self.entries
        ]


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        schema_for(self.kind, self.params).validate(self.params, where=self.kind)

    @classmethod
    def default(cls, kind: str) -> "FilterSpec":
        schema = schema_for(kind)
        return cls(kind, schema.to_dict(schema.defaults))

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FilterSpec":
        return cls(obj["kind"], obj.get("params", {}))


@dataclass(frozen=True)
class FilterChain:
    stages: tuple[FilterSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def __len__(self) -> int:
        return len(self.stages)

    def to_json(self) -> dict:
        return {"stages": [s.to_json() for s in self.stages]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FilterChain":
        if "stages" in obj:
            return cls(tuple(FilterSpec.from_json(s) for s in obj["stages"]))
        return cls((FilterSpec.from_json(obj),))


@dataclass(frozen=True, eq=False)
class Kernel:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim == 1:
            n = math.isqrt(w.size)
            if n * n != w.size:
                raise ValueError(f"{w.size} weights do not form a square kernel")
            w = w.reshape(n, n)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd size, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def delta(cls, size: int = 3) -> "Kernel":
        w = np.zeros((size, size))
        w[size // 2, size // 2] = 1.0
        return cls(w)

    def to_json(self) -> dict:
        return {"kind": "convolution", "size": self.size, "weights": self.weights.tolist()}

    def __eq__(self, other):
        return isinstance(other, Kernel) and np.array_equal(self.weights, other.weights)

    __hash__ = None


# -- rounding --------------------------------------------------------------

def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(x) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def _check(name: str, value: float, lo: float, hi: float, lo_open: bool = False) -> None:
    ok = (lo < value if lo_open else lo <= value) and value <= hi
    if not ok or not math.isfinite(value):
        bracket = "(" if lo_open else "["
        raise ValueError(f"{name}={value} outside {bracket}{lo}, {hi}]")


def _plane(plane) -> np.ndarray:
    p = np.asarray(plane)
    if p.ndim != 2 or p.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 plane")
    return p


def _lut(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    return to_uint8(table)[plane]


_LEVELS = np.arange(256, dtype=float)


# -- point transforms ------------------------------------------------------

def gamma_correct(plane, gamma: float) -> np.ndarray:
    _check("gamma", gamma, 0.2, 5.0)
    return _lut(_plane(plane), 255.0 * (_LEVELS / 255.0) ** gamma)


def linear_contrast(plane, a: float, b: float) -> np.ndarray:
    _check("a", a, 0.25, 4.0)
    _check("b", b, -64.0, 64.0)
    return _lut(_plane(plane), a * (_LEVELS - 128.0) + 128.0 + b)


def poly_contrast(plane, a3: float, a2: float, a1: float, a0: float) -> np.ndarray:
    for name, v in (("a3", a3), ("a2", a2), ("a1", a1), ("a0", a0)):
        _check(name, v, -2.0, 2.0)
    v = _LEVELS / 255.0
    return _lut(_plane(plane), 255.0 * (a3 * v**3 + a2 * v**2 + a1 * v + a0))


# -- histogram equalization ------------------------------------------------

def _equalize_map(hist: np.ndarray) -> np.ndarray | None:
    """Real-valued equalization curve for a 256-bin histogram, or None if degenerate."""
    cdf = np.cumsum(hist, dtype=float)
    n = cdf[-1]
    nonzero = cdf[cdf > 0]
    cdf_min = nonzero[0] if nonzero.size else n
    if cdf_min == n:
        return None
    return (cdf - cdf_min) / (n - cdf_min) * 255.0


def hist_equalize(plane) -> np.ndarray:
    p = _plane(plane)
    curve = _equalize_map(np.bincount(p.ravel(), minlength=256))
    if curve is None:
        return p.copy()
    return _lut(p, curve)


def _clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    hist = hist.astype(np.int64)
    excess = int(np.maximum(hist - limit, 0).sum())
    if excess == 0:
        return hist
    clipped = np.minimum(hist, limit) + excess // 256
    clipped[: excess % 256] += 1
    return clipped


def _tile_bounds(length: int, tiles: int) -> list[tuple[int, int]]:
    step = length // tiles
    return [(i * step, length if i == tiles - 1 else (i + 1) * step) for i in range(tiles)]


def _interp_axis(length: int, bounds: list[tuple[int, int]]):
    """Per-coordinate (lower tile, upper tile, upper weight) for bilinear blending."""
    centers = np.array([(a + b - 1) / 2.0 for a, b in bounds])
    x = np.arange(length, dtype=float)
    hi = np.searchsorted(centers, x, side="right")
    lo = np.clip(hi - 1, 0, len(centers) - 1)
    hi = np.clip(hi, 0, len(centers) - 1)
    span = centers[hi] - centers[lo]
    w = np.where(span > 0, (x - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, w


def clahe(plane, clip_limit: float, tiles_x: int, tiles_y: int) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    ``clip_limit`` is a multiple of the mean bin count (tile pixels / 256).
    Clipped excess is spread evenly over all bins in one pass, with the
    integer-division residual handed out one count per bin from bin 0.
    Tile mappings are blended bilinearly between tile centers; pixels
    outside the outermost centers use the edge tiles' mappings.
    """
    # the tuning schema bounds clip_limit to [1, 40]; direct calls may go higher
    _check("clip_limit", clip_limit, 1.0, math.inf)
    for name, t in (("tiles_x", tiles_x), ("tiles_y", tiles_y)):
        _check(name, t, 1, 16)
        if t != int(t):
            raise ValueError(f"{name} must be an integer")
    p = _plane(plane)
    h, w = p.shape
    tx, ty = min(int(tiles_x), w), min(int(tiles_y), h)
    xb, yb = _tile_bounds(w, tx), _tile_bounds(h, ty)

    luts = np.empty((ty, tx, 256))
    for j, (y0, y1) in enumerate(yb):
        for i, (x0, x1) in enumerate(xb):
            tile = p[y0:y1, x0:x1]
            hist = np.bincount(tile.ravel(), minlength=256)
            limit = math.ceil(clip_limit * tile.size / 256)
            curve = None
            if np.count_nonzero(hist) > 1:
                curve = _equalize_map(_clip_histogram(hist, limit))
            luts[j, i] = _LEVELS if curve is None else curve

    ylo, yhi, wy = _interp_axis(h, yb)
    xlo, xhi, wx = _interp_axis(w, xb)
    wy, wx = wy[:, None], wx[None, :]
    r0, r1 = ylo[:, None], yhi[:, None]
    c0, c1 = xlo[None, :], xhi[None, :]
    out = (
        (1 - wy) * (1 - wx) * luts[r0, c0, p]
        + (1 - wy) * wx * luts[r0, c1, p]
        + wy * (1 - wx) * luts[r1, c0, p]
        + wy * wx * luts[r1, c1, p]
    )
    return to_uint8(out)


# -- blurs and sharpening --------------------------------------------------

def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    r = math.ceil(3 * sigma)
    x = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def _correlate_axis(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    r = len(k) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    if r > _DIRECT_BLUR_MAX_RADIUS:
        # deferred: scipy.signal costs ~0.4 s to import and only large radii need it
        from scipy.signal import fftconvolve

        kshape = [1, 1]
        kshape[axis] = len(k)
        return fftconvolve(padded, k[::-1].reshape(kshape), mode="valid", axes=axis)
    out = np.zeros(a.shape, dtype=float)
    for t, wt in enumerate(k):
        out += wt * (padded[t:t + n, :] if axis == 0 else padded[:, t:t + n])
    return out


def _blur_real(plane: np.ndarray, sigma_px: float) -> np.ndarray:
    k = gaussian_kernel_1d(sigma_px)
    horiz = _correlate_axis(np.asarray(plane, dtype=float), k, axis=1)
    return _correlate_axis(horiz, k, axis=0)


def gaussian_blur(plane, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(3*sigma), edge replication.

    Returns float64; callers do the rounding. Rows are filtered first,
    then columns.
    """
    _check("sigma", sigma, 0.0, 10.0, lo_open=True)
    return _blur_real(_plane(plane), sigma)


def unsharp(plane, sigma: float, amount: float) -> np.ndarray:
    _check("amount", amount, 0.0, 5.0)
    p = _plane(plane)
    if amount == 0:
        return p.copy()
    s = p.astype(float)
    return to_uint8(s + amount * (s - gaussian_blur(p, sigma)))


def convolve(plane, kernel: Kernel) -> np.ndarray:
    """2-D correlation with edge replication; taps accumulate in row-major order."""
    p = _plane(plane)
    if not isinstance(kernel, Kernel):
        kernel = Kernel(kernel)
    n = kernel.size
    r = n // 2
    h, w = p.shape
    padded = np.pad(p.astype(float), r, mode="edge")
    acc = np.zeros((h, w))
    for i in range(n):
        for j in range(n):
            acc += kernel.weights[i, j] * padded[i:i + h, j:j + w]
    return to_uint8(acc)


# -- tone mapping ----------------------------------------------------------

def drago_tonemap(plane, bias: float) -> np.ndarray:
    """Drago adaptive logarithmic mapping on normalized luma.

    Luma v in [0, 1] is taken as world luminance 100*v; the display maximum
    is 100 cd/m^2, so the plane's brightest sample lands on 255.
    """
    _check("bias", bias, 0.0, 1.0, lo_open=True)
    if bias >= 1.0:
        raise ValueError(f"bias={bias} outside (0, 1)")
    p = _plane(plane)
    lmax = float(p.max()) / 255.0
    if lmax == 0:
        return p.copy()
    lw = DRAGO_WORLD_SCALE * _LEVELS / 255.0
    lwmax = DRAGO_WORLD_SCALE * lmax
    exponent = math.log(bias) / math.log(0.5)
    ratio = np.minimum(lw / lwmax, 1.0)
    ld = (math.log(10.0) / math.log1p(lwmax)) * np.log1p(lw) / np.log(2.0 + 8.0 * ratio**exponent)
    return _lut(p, 255.0 * ld)


def reinhard_tonemap(plane, key: float) -> np.ndarray:
    _check("key", key, 0.0, 2.0, lo_open=True)
    p = _plane(plane)
    v = p.astype(float) / 255.0
    log_mean = math.exp(float(np.mean(np.log(REINHARD_DELTA + v))))
    ls = key * _LEVELS / 255.0 / log_mean
    return _lut(p, 255.0 * ls / (1.0 + ls))


def retinex(plane, sigmas: Sequence[float]) -> np.ndarray:
    """Multi-scale retinex; each sigma is scaled by 16 to get the blur in pixels."""
    sigmas = list(sigmas)
    if not 1 <= len(sigmas) <= 3:
        raise ValueError("retinex takes 1 to 3 scales")
    for i, s in enumerate(sigmas):
        _check(f"sigmas[{i}]", s, 0.0, 10.0, lo_open=True)
    p = _plane(plane)
    s = p.astype(float)
    log_s = np.log1p(s)
    r = sum(log_s - np.log1p(_blur_real(p, RETINEX_SIGMA_SCALE * sg)) for sg in sigmas) / len(sigmas)
    lo, hi = float(r.min()), float(r.max())
    # FFT blurs of a flat plane leave ~1e-13 ripple; treat that as constant
    if hi - lo <= 1e-9:
        return p.copy()
    return to_uint8((r - lo) / (hi - lo) * 255.0)


# -- registry --------------------------------------------------------------

PlaneOp = Callable[..., np.ndarray]


@dataclass(frozen=True)
class _Registered:
    schema: ParamSchema
    op: PlaneOp


_REGISTRY: dict[str, _Registered] = {}


def register_filter(kind: str, schema: ParamSchema | Iterable[ParamEntry], op: PlaneOp) -> None:
    """Add a filter kind. ``op(plane, **params)`` must return a uint8 plane."""
    if not isinstance(schema, ParamSchema):
        schema = ParamSchema(tuple(schema))
    _REGISTRY[kind] = _Registered(schema, op)


def filter_kinds() -> list[str]:
    return list(_REGISTRY)


def kernel_schema(size: int = 3, bound: float = 4.0) -> ParamSchema:
    if size not in (3, 5):
        raise ValueError("kernel size must be 3 or 5")
    c = size // 2
    return ParamSchema(tuple(
        ParamEntry(f"w{i}_{j}", -bound, bound, 1.0 if i == j == c else 0.0)
        for i in range(size) for j in range(size)
    ))


def schema_for(kind: str, params: Mapping[str, float] | None = None) -> ParamSchema:
    if kind == "convolution" and params is not None and len(params) == 25:
        return kernel_schema(5)
    try:
        return _REGISTRY[kind].schema
    except KeyError:
        raise ValueError(f"unknown filter kind {kind!r}") from None


def _kernel_op(plane, **weights):
    n = math.isqrt(len(weights))
    w = [[weights[f"w{i}_{j}"] for j in range(n)] for i in range(n)]
    return convolve(plane, Kernel(w))


def _clahe_op(plane, clip_limit, tiles_x, tiles_y):
    return clahe(plane, clip_limit, int(round(tiles_x)), int(round(tiles_y)))


def _retinex_op(plane, sigma1, sigma2, sigma3):
    return retinex(plane, [sigma1, sigma2, sigma3])


E = ParamEntry
register_filter("gamma", [E("gamma", 0.2, 5.0, 1.0)], gamma_correct)
register_filter("linear_contrast", [E("a", 0.25, 4.0, 1.0), E("b", -64.0, 64.0, 0.0)], linear_contrast)
register_filter(
    "poly_contrast",
    [E("a3", -2.0, 2.0, 0.0), E("a2", -2.0, 2.0, 0.0), E("a1", -2.0, 2.0, 1.0), E("a0", -2.0, 2.0, 0.0)],
    poly_contrast,
)
register_filter("hist_eq", [], hist_equalize)
register_filter(
    "clahe",
    [E("clip_limit", 1.0, 40.0, 2.0), E("tiles_x", 1, 16, 8, integer=True), E("tiles_y", 1, 16, 8, integer=True)],
    _clahe_op,
)
register_filter("unsharp", [E("sigma", 0.1, 10.0, 1.0), E("amount", 0.0, 5.0, 0.0)], unsharp)
register_filter("drago", [E("bias", 0.01, 0.99, 0.85)], drago_tonemap)
register_filter("reinhard", [E("key", 0.01, 2.0, 0.18)], reinhard_tonemap)
register_filter(
    "retinex",
    [E("sigma1", 0.1, 10.0, 1.0), E("sigma2", 0.1, 10.0, 4.0), E("sigma3", 0.1, 10.0, 10.0)],
    _retinex_op,
)
register_filter("convolution", kernel_schema(3), _kernel_op)
del E


# -- frame and sequence application ---------------------------------------

def apply_plane(plane, spec: FilterSpec) -> np.ndarray:
    return _REGISTRY[spec.kind].op(plane, **spec.params)


def apply_filter(frame: VideoFrame, spec: FilterSpec | Kernel) -> VideoFrame:
    """Filter the luma plane; chroma passes through untouched."""
    if isinstance(spec, Kernel):
        return frame.with_luma(convolve(frame.luma, spec))
    if spec.kind not in _REGISTRY:
        raise ValueError(f"unknown filter kind {spec.kind!r}")
    return frame.with_luma(apply_plane(frame.luma, spec))


def apply_chain(seq: VideoSequence, chain: FilterChain | Kernel | Sequence[FilterSpec]) -> VideoSequence:
    if isinstance(chain, Kernel):
        stages: tuple = (chain,)
    elif isinstance(chain, FilterChain):
        stages = chain.stages
    else:
        stages = tuple(chain)
    if not stages:
        return seq
    frames = []
    for f in seq.frames:
        for stage in stages:
            f = apply_filter(f, stage)
        frames.append(f)
    return seq.replace_frames(frames)
