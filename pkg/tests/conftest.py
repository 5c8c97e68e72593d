import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pixeltext.geometry import Polygon  # noqa: E402
from pixeltext.synth import make_ribbon  # noqa: E402


def rect(x0, y0, x1, y1):
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def rotated_rect(cx, cy, length, height, degrees):
    a = math.radians(degrees)
    u = np.array([math.cos(a), math.sin(a)])
    n = np.array([-u[1], u[0]])
    c = np.array([cx, cy])
    hl, hh = length / 2, height / 2
    return Polygon([c - hl * u - hh * n, c + hl * u - hh * n, c + hl * u + hh * n, c - hl * u + hh * n])


def sine_ribbon(center=(128, 128), length=180, height=30, kappa=0.004, angle=0.3, phase=0.7):
    verts, line = make_ribbon("sine", length, height, kappa, angle, center, samples=12, phase=phase)
    return Polygon(verts), line


@pytest.fixture
def bent_ribbon():
    return sine_ribbon()


@pytest.fixture(scope="session")
def synth_small():
    from pixeltext.synth import SynthConfig, synth_corpus

    return synth_corpus(SynthConfig(seed=5, count=12))


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
