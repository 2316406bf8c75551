"""Raw 8-bit 4:2:0 frames, YUV4MPEG2 and binary PGM I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Sequence

import numpy as np

__all__ = [
    "FormatError",
    "VideoFrame",
    "VideoSequence",
    "read_y4m",
    "write_y4m",
    "read_y4m_file",
    "write_y4m_file",
    "read_pgm",
    "write_pgm",
    "extend_sequence",
]

Y4M_MAGIC = b"YUV4MPEG2"
SUPPORTED_CHROMA = ("420", "420jpeg", "420mpeg2")


class FormatError(ValueError):
    """Malformed or unsupported input bytes; ``offset`` points at the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


def _as_plane(data, height: int, width: int, name: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.shape != (height, width):
        raise ValueError(f"{name} plane has shape {arr.shape}, expected {(height, width)}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} plane has samples outside [0, 255]")
        arr = arr.astype(np.uint8)
    arr = np.array(arr, dtype=np.uint8, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VideoFrame:
    """One planar 8-bit 4:2:0 frame. Planes are read-only ``uint8`` arrays."""

    luma: np.ndarray
    chroma_u: np.ndarray
    chroma_v: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        luma = np.asarray(self.luma)
        if luma.ndim != 2:
            raise ValueError("luma plane must be 2-D")
        h, w = luma.shape
        if w < 2 or h < 2 or w % 2 or h % 2:
            raise ValueError(f"frame dimensions must be even and >= 2, got {w}x{h}")
        if self.bit_depth != 8:
            raise ValueError("only 8-bit frames are supported")
        object.__setattr__(self, "luma", _as_plane(luma, h, w, "luma"))
        object.__setattr__(self, "chroma_u", _as_plane(self.chroma_u, h // 2, w // 2, "chroma_u"))
        object.__setattr__(self, "chroma_v", _as_plane(self.chroma_v, h // 2, w // 2, "chroma_v"))

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    @classmethod
    def from_luma(cls, luma, chroma_value: int = 128) -> "VideoFrame":
        """Build a frame around ``luma`` with flat chroma planes."""
        luma = np.asarray(luma)
        h, w = luma.shape
        chroma = np.full((h // 2, w // 2), chroma_value, dtype=np.uint8)
        return cls(luma, chroma, chroma.copy())

    def with_luma(self, luma) -> "VideoFrame":
        return VideoFrame(luma, self.chroma_u, self.chroma_v)

    def __eq__(self, other):
        if not isinstance(other, VideoFrame):
            return NotImplemented
        return (
            np.array_equal(self.luma, other.luma)
            and np.array_equal(self.chroma_u, other.chroma_u)
            and np.array_equal(self.chroma_v, other.chroma_v)
        )

    __hash__ = None


@dataclass(frozen=True)
class VideoSequence:
    frames: tuple[VideoFrame, ...]
    fps_num: int = 25
    fps_den: int = 1

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("sequence must contain at least one frame")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if (f.width, f.height) != (w, h):
                raise ValueError(f"frame {i} is {f.width}x{f.height}, expected {w}x{h}")
        if self.fps_den <= 0 or self.fps_num <= 0:
            raise ValueError("frame rate must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def fps(self) -> Fraction:
        return Fraction(self.fps_num, self.fps_den)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def head(self, n: int) -> "VideoSequence":
        return self.replace_frames(self.frames[:n])

    def replace_frames(self, frames: Sequence[VideoFrame]) -> "VideoSequence":
        return VideoSequence(tuple(frames), self.fps_num, self.fps_den)


# -- YUV4MPEG2 -------------------------------------------------------------

def _parse_y4m_header(line: bytes) -> dict:
    tokens = line.split(b" ")
    if tokens[0] != Y4M_MAGIC:
        raise FormatError("missing YUV4MPEG2 signature", 0)
    info = {"chroma": "420"}
    offset = len(Y4M_MAGIC) + 1
    for tok in tokens[1:]:
        if not tok:
            offset += 1
            continue
        key, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        if key in "WH":
            if not val.isdigit():
                raise FormatError(f"bad {key} token {tok!r}", offset)
            info[key] = int(val)
        elif key == "F":
            m = re.fullmatch(r"(\d+):(\d+)", val)
            if not m or int(m.group(2)) == 0 or int(m.group(1)) == 0:
                raise FormatError(f"bad frame rate token {tok!r}", offset)
            info["fps"] = (int(m.group(1)), int(m.group(2)))
        elif key == "C":
            if val not in SUPPORTED_CHROMA:
                raise FormatError(f"unsupported chroma/bit depth {val!r}", offset)
            info["chroma"] = val
        # I, A, X and unknown tokens carry nothing we use
        offset += len(tok) + 1
    for key in "WH":
        if key not in info:
            raise FormatError(f"header lacks {key} token", 0)
    w, h = info["W"], info["H"]
    if w < 2 or h < 2 or w % 2 or h % 2:
        raise FormatError(f"unsupported dimensions {w}x{h} (must be even, >= 2)", 0)
    return info


def read_y4m(data: bytes | BinaryIO) -> VideoSequence:
    """Parse a complete YUV4MPEG2 stream. Samples are copied verbatim."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    buf = bytes(data)
    nl = buf.find(b"\n")
    if nl < 0:
        raise FormatError("unterminated stream header", len(buf))
    info = _parse_y4m_header(buf[:nl])
    w, h = info["W"], info["H"]
    fps_num, fps_den = info.get("fps", (25, 1))
    ysize, csize = w * h, (w // 2) * (h // 2)
    payload = ysize + 2 * csize

    frames = []
    pos = nl + 1
    while pos < len(buf):
        fnl = buf.find(b"\n", pos)
        if fnl < 0 or not buf.startswith(b"FRAME", pos) or fnl - pos > 4096:
            raise FormatError("expected FRAME marker", pos)
        start = fnl + 1
        if start + payload > len(buf):
            raise FormatError(
                f"truncated frame payload: need {payload} bytes, have {len(buf) - start}", start
            )
        raw = np.frombuffer(buf, dtype=np.uint8, count=payload, offset=start)
        frames.append(
            VideoFrame(
                raw[:ysize].reshape(h, w),
                raw[ysize:ysize + csize].reshape(h // 2, w // 2),
                raw[ysize + csize:].reshape(h // 2, w // 2),
            )
        )
        pos = start + payload
    if not frames:
        raise FormatError("stream contains no frames", pos)
    return VideoSequence(tuple(frames), fps_num, fps_den)


def y4m_header(seq: VideoSequence) -> bytes:
    return f"YUV4MPEG2 W{seq.width} H{seq.height} F{seq.fps_num}:{seq.fps_den} Ip A1:1 C420mpeg2\n".encode("ascii")


def write_y4m(seq: VideoSequence) -> bytes:
    parts = [y4m_header(seq)]
    for f in seq.frames:
        parts += [b"FRAME\n", f.luma.tobytes(), f.chroma_u.tobytes(), f.chroma_v.tobytes()]
    return b"".join(parts)


def read_y4m_file(path) -> VideoSequence:
    with open(path, "rb") as fh:
        return read_y4m(fh.read())


def write_y4m_file(path, seq: VideoSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(y4m_header(seq))
        for f in seq.frames:
            fh.write(b"FRAME\n")
            fh.write(f.luma.tobytes())
            fh.write(f.chroma_u.tobytes())
            fh.write(f.chroma_v.tobytes())


# -- PGM -------------------------------------------------------------------

def _pgm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            end = buf.find(b"\n", pos)
            pos = len(buf) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", pos)
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise FormatError("truncated PGM header", pos)
    return tokens, pos + 1


def read_pgm(data: bytes | BinaryIO) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM into an ``(height, width)`` uint8 array."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    buf = bytes(data)
    if not buf.startswith(b"P5"):
        raise FormatError("not a binary PGM (P5 magic missing)", 0)
    (_, w, h, maxval), start = _pgm_tokens(buf, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError("non-numeric PGM header field", 0) from None
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}", 0)
    if start + w * h > len(buf):
        raise FormatError(f"truncated PGM raster: need {w * h} bytes, have {len(buf) - start}", start)
    return np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=start).reshape(h, w).copy()


def write_pgm(plane: np.ndarray) -> bytes:
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 plane")
    h, w = plane.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + plane.tobytes()


def extend_sequence(seq: VideoSequence, target_frames: int) -> VideoSequence:
    """Truncate to ``target_frames`` or repeat frames cyclically from the start."""
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    n = len(seq)
    return seq.replace_frames([seq.frames[i % n] for i in range(target_frames)])
