"""Fixed-step RK4 flow of a :class:`PolyVectorField`: one-step prediction and
trajectories that end by convergence, escape or horizon."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .field import Domain, PolyVectorField

DEFAULT_H = 0.01
CONV_RADIUS = 1e-4
FIELD_TOL = 1e-6
CONV_COUNT = 10
HORIZON = 500.0


class BlowUpError(ArithmeticError):
    """The integrated state became non-finite."""

    def __init__(self, time_reached: float):
        super().__init__(f"integration blew up (non-finite state) after t={time_reached:g}")
        self.time_reached = time_reached


def _schedule(span: float, h: float) -> tuple[int, float]:
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"step h must be positive, got {h!r}")
    if not (span > 0 and math.isfinite(span)):
        raise ValueError(f"span must be positive, got {span!r}")
    k = round(span / h)
    if k >= 1 and abs(k * h - span) <= 1e-9 * max(span, h):
        return k, 0.0
    k = int(math.floor(span / h))
    return k, span - k * h


def advance_many(model: PolyVectorField, states, span: float, h: float = DEFAULT_H) -> np.ndarray:
    """Flow each row of ``states`` forward by ``span`` (RK4, step ``h``; a
    trailing partial step covers any remainder)."""
    x = model._check_states(np.atleast_2d(states))
    nsteps, last = _schedule(span, h)
    out, fail = kernels.rk4_steps(model.terms, x, h, nsteps, last)
    if np.any(fail >= 0):
        first = int(fail[fail >= 0].min())
        raise BlowUpError(min(first * h, span))
    return out


def advance(model: PolyVectorField, state, span: float, h: float = DEFAULT_H) -> np.ndarray:
    return advance_many(model, np.asarray(state, dtype=float)[None, :], span, h)[0]


@dataclass(frozen=True)
class Termination:
    kind: str  # "converged" | "escaped" | "horizon"
    time: float
    fixed_point: int | None = None
    location: tuple[float, ...] | None = None
    axis: int | None = None
    side: str | None = None  # "lower" | "upper" | "overflow"

    def describe(self) -> str:
        if self.kind == "converged":
            return f"converged to fixed point {self.fixed_point} at t={self.time:g}"
        if self.kind == "escaped":
            if self.side == "overflow":
                return f"escaped through overflow at t={self.time:g}"
            return f"escaped through {self.side} bound of axis {self.axis} at t={self.time:g}"
        return f"reached horizon t={self.time:g}"


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray
    termination: Termination
    steps: int

    def to_csv(self, path: str | Path, names: Sequence[str] | None = None) -> None:
        names = list(names or [f"x{i + 1}" for i in range(self.states.shape[1])])
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", *names])
            for t, row in zip(self.times, self.states):
                w.writerow([format(t, ".17g"), *(format(v, ".17g") for v in row)])


def _bounds(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(domain.lower) - domain.escape_margin, np.asarray(domain.upper)


def _termination(status, target, steps, h, fps) -> Termination:
    t = steps * h
    if status == kernels.CONVERGED:
        return Termination("converged", t, int(target), tuple(float(v) for v in fps[target]))
    if status == kernels.ESCAPED:
        return Termination("escaped", t, axis=int(target) // 2, side="upper" if target % 2 else "lower")
    if status == kernels.OVERFLOW:
        return Termination("escaped", t, side="overflow")
    return Termination("horizon", t)


def trajectory(
    model: PolyVectorField,
    start,
    horizon: float = HORIZON,
    h: float = DEFAULT_H,
    domain: Domain | None = None,
    fixed_points=None,
    *,
    conv_radius: float = CONV_RADIUS,
    field_tol: float = FIELD_TOL,
    conv_count: int = CONV_COUNT,
) -> TrajectoryResult:
    """Integrate from ``start`` until it settles on one of ``fixed_points``,
    leaves ``domain``, or reaches ``horizon``."""
    x0 = model._check_states(start)
    domain = domain or model.domain or Domain.positive_orthant(model.n)
    if not domain.contains(x0):
        raise ValueError(f"start {x0.tolist()} lies outside the domain")
    fps = np.asarray(fixed_points if fixed_points is not None else [], dtype=float).reshape(-1, model.n)
    lo, hi = _bounds(domain)
    max_steps = int(math.ceil(horizon / h - 1e-9))
    res = kernels.integrate(
        model.terms, x0[None, :], h, max_steps, lo, hi, fps, conv_radius, field_tol, conv_count, record=True
    )
    steps = int(res.steps[0])
    path = res.path
    times = np.arange(path.shape[0]) * h
    term = _termination(int(res.status[0]), int(res.target[0]), steps, h, fps)
    return TrajectoryResult(times, path, term, steps)


def terminations(
    model: PolyVectorField,
    starts,
    horizon: float = HORIZON,
    h: float = DEFAULT_H,
    domain: Domain | None = None,
    fixed_points=None,
    *,
    conv_radius: float = CONV_RADIUS,
    field_tol: float = FIELD_TOL,
    conv_count: int = CONV_COUNT,
) -> list[Termination]:
    """Batch variant of :func:`trajectory` that keeps only the outcome."""
    X = model._check_states(np.atleast_2d(starts))
    domain = domain or model.domain or Domain.positive_orthant(model.n)
    fps = np.asarray(fixed_points if fixed_points is not None else [], dtype=float).reshape(-1, model.n)
    lo, hi = _bounds(domain)
    max_steps = int(math.ceil(horizon / h - 1e-9))
    res = kernels.integrate(model.terms, X, h, max_steps, lo, hi, fps, conv_radius, field_tol, conv_count)
    return [
        _termination(int(s), int(t), int(k), h, fps)
        for s, t, k in zip(res.status, res.target, res.steps)
    ]
