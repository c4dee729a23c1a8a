"""Hot numerical kernels: field evaluation and fixed-step RK4 integration.

Two interchangeable backends share one signature set:

* ``trendflow._ckernels`` -- compiled Cython extension (used when built);
* ``trendflow._pykernels`` -- vectorized NumPy fallback.

Set ``TRENDFLOW_PURE=1`` to force the fallback. ``BACKEND`` names the one
in use. Both evaluate every term with the same operation order, so results
agree to rounding (in practice bit-for-bit).
"""
from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

# integrate() status codes
HORIZON = 0
CONVERGED = 1
ESCAPED = 2
OVERFLOW = 3


class Terms(NamedTuple):
    """Flattened polynomial: field[comp[k]] += coef[k] * prod_j x_j ** exps[k, j]."""

    coef: np.ndarray
    comp: np.ndarray
    exps: np.ndarray
    n: int
    degree: int


class Integration(NamedTuple):
    status: np.ndarray  # (S,) int
    target: np.ndarray  # (S,) fixed-point index, or escape code 2*axis + (0 low / 1 high)
    steps: np.ndarray  # (S,) full RK4 steps taken
    final: np.ndarray  # (S, n)
    path: np.ndarray | None  # (steps + 1, n) when record=True and S == 1


def _load_backend():
    if os.environ.get("TRENDFLOW_PURE") == "1":
        from . import _pykernels as mod

        return mod, "python"
    try:
        from . import _ckernels as mod
    except ImportError:
        from . import _pykernels as mod

        return mod, "python"
    return mod, "compiled"


_impl, BACKEND = _load_backend()


def use_backend(name: str) -> None:
    """Switch backend at runtime ('compiled' or 'python'); for benchmarks and tests."""
    global _impl, BACKEND
    if name == "python":
        from . import _pykernels as mod
    elif name == "compiled":
        from . import _ckernels as mod
    else:
        raise ValueError(f"unknown backend {name!r}")
    _impl, BACKEND = mod, name


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


def eval_field(terms: Terms, x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.eval_field(terms.coef, terms.comp, terms.exps, terms.degree, x)


def rk4_steps(terms: Terms, x: np.ndarray, h: float, nsteps: int, last_h: float) -> tuple[np.ndarray, np.ndarray]:
    """Advance every row of ``x`` by ``nsteps`` RK4 steps of size ``h`` and,
    if ``last_h > 0``, one extra step of size ``last_h``.

    Returns ``(states, fail_step)``; ``fail_step[s]`` is the index of the
    first step that produced a non-finite state (-1 if none); failed rows keep
    their last finite state.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.rk4_steps(terms.coef, terms.comp, terms.exps, terms.degree, x, float(h), int(nsteps), float(last_h))


def integrate(
    terms: Terms,
    starts: np.ndarray,
    h: float,
    max_steps: int,
    lower: np.ndarray,
    upper: np.ndarray,
    fixed_points: np.ndarray,
    conv_radius: float,
    field_tol: float,
    conv_count: int,
    record: bool = False,
) -> Integration:
    """Integrate each start until convergence, escape or ``max_steps``.

    Convergence: within ``conv_radius`` of a row of ``fixed_points`` with
    field norm below ``field_tol`` for ``conv_count`` consecutive steps (or
    already at the start state). Escape: any coordinate below ``lower`` or
    above ``upper`` after a full step.
    """
    starts = np.ascontiguousarray(np.atleast_2d(starts), dtype=np.float64)
    fps = np.ascontiguousarray(np.asarray(fixed_points, dtype=np.float64).reshape(-1, terms.n))
    if record and starts.shape[0] != 1:
        raise ValueError("path recording needs exactly one start")
    res = _impl.integrate(
        terms.coef, terms.comp, terms.exps, terms.degree, starts, float(h), int(max_steps),
        np.ascontiguousarray(lower, dtype=np.float64), np.ascontiguousarray(upper, dtype=np.float64),
        fps, float(conv_radius), float(field_tol), int(conv_count), bool(record),
    )
    return Integration(*res)
