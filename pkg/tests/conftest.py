import numpy as np
import pytest

from trendflow.field import PolyVectorField, from_arrays
from trendflow.integrate import advance
from trendflow.series import SeriesFrame


def linear_decay(rates=(-1.0, -1.0), domain=None):
    n = len(rates)
    return PolyVectorField(eps=rates, coeffs=tuple({} for _ in range(n)), degree=1, domain=domain)


def rotation(domain=None):
    """x' = -y, y' = x."""
    return from_arrays((0.0, 0.0), ((-1.0,), (1.0,)), domain=domain)


def flow_series(model, start, T, dt, names=None):
    """Noise-free samples of the model's own flow, one every ``dt``."""
    x = np.asarray(start, dtype=float)
    rows = [x]
    for _ in range(T - 1):
        x = advance(model, x, dt)
        rows.append(x)
    names = names or tuple(f"x{i}" for i in range(model.n))
    return SeriesFrame(tuple(names), np.array(rows), dt)


def euler_series(model, start, T, dt, names=None):
    """Samples of the forward-Euler map, so forward differences equal the field exactly."""
    x = np.asarray(start, dtype=float)
    rows = [x]
    for _ in range(T - 1):
        x = x + dt * model(x)
        rows.append(x)
    names = names or tuple(f"x{i}" for i in range(model.n))
    return SeriesFrame(tuple(names), np.array(rows), dt)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def acceptance_line(number: int, ok: bool, detail: str) -> str:
    line = f"acceptance {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
