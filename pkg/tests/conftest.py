import shlex
import sys
from pathlib import Path

import numpy as np
import pytest

from vqhack.frameio import VideoFrame, VideoSequence

FIXTURES = Path(__file__).parent / "fixtures"


def script(name: str, *args: str) -> str:
    """Command template running a fixture script with this interpreter."""
    parts = [shlex.quote(sys.executable), shlex.quote(str(FIXTURES / name))]
    return " ".join(parts + list(args))


def random_plane(rng, h=16, w=16):
    return rng.integers(0, 256, (h, w), dtype=np.uint8)


def random_frame(rng, h=16, w=16):
    return VideoFrame(
        random_plane(rng, h, w),
        random_plane(rng, h // 2, w // 2),
        random_plane(rng, h // 2, w // 2),
    )


def random_sequence(rng, n=3, h=16, w=16, fps=(25, 1)):
    return VideoSequence(tuple(random_frame(rng, h, w) for _ in range(n)), *fps)


def smooth_sequence(rng, n=3, h=32, w=32):
    """Natural-ish content: a gradient plus mild noise, values well inside [0, 255]."""
    yy, xx = np.mgrid[0:h, 0:w]
    frames = []
    for k in range(n):
        base = 60 + 80 * (xx / w) + 40 * np.sin((yy + 3 * k) / 5.0)
        luma = np.clip(base + rng.normal(0, 6, (h, w)), 0, 255).round().astype(np.uint8)
        frames.append(VideoFrame.from_luma(luma))
    return VideoSequence(tuple(frames), 25, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
