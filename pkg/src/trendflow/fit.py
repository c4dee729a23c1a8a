"""Least-squares identification of polynomial vector fields and degree selection."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import forecast as ev
from ._lsq import lstsq_qr
from .field import BASIS_MODES, Domain, PolyVectorField, monomials
from .integrate import DEFAULT_H, advance
from .series import DerivativeSamples, SeriesFrame, estimate_derivatives

log = logging.getLogger(__name__)

FALLBACK_RIDGE = 1e-8


class FitError(ValueError):
    """Fitting cannot proceed (bad samples, too few rows, singular design)."""


class RankDeficientError(FitError):
    pass


class RankDeficiencyWarning(RuntimeWarning):
    pass


def design_matrix(states: np.ndarray, i: int, degree: int, mode: str = "full") -> tuple[np.ndarray, list]:
    """Columns ``[x_i, m_1(x), m_2(x), ...]`` for component ``i``."""
    states = np.asarray(states, dtype=float)
    basis = monomials(states.shape[1], degree, i, mode)
    cols = [states[:, i]]
    for e in basis:
        cols.append(np.prod(states ** np.asarray(e), axis=1))
    return np.column_stack(cols), basis


def fit(
    samples: DerivativeSamples,
    degree: int,
    basis_mode: str = "full",
    ridge: float = 0.0,
    *,
    fallback_ridge: float | None = FALLBACK_RIDGE,
    nonneg_eps: bool = False,
    domain: Domain | None = None,
    scaling=None,
    variable_names: Sequence[str] | None = None,
) -> PolyVectorField:
    """Fit ``deriv_i ~ eps_i x_i + V_i(others)`` component by component.

    With ``ridge == 0`` a rank-deficient design is refit with
    ``fallback_ridge`` (and a :class:`RankDeficiencyWarning`), or raises
    :class:`RankDeficientError` when ``fallback_ridge`` is None.
    ``nonneg_eps`` clamps a negative self-rate to zero and refits the rest.
    """
    if basis_mode not in BASIS_MODES:
        raise FitError(f"unknown basis_mode {basis_mode!r}")
    if not (isinstance(degree, (int, np.integer)) and degree >= 1):
        raise FitError(f"degree must be an integer >= 1, got {degree!r}")
    if ridge < 0:
        raise FitError("ridge must be nonnegative")
    X, Y = samples.states, samples.derivs
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise FitError("non-finite derivative samples")
    M, n = X.shape

    eps, tables = [], []
    for i in range(n):
        A, basis = design_matrix(X, i, degree, basis_mode)
        p = A.shape[1]
        if ridge == 0 and M < p:
            raise FitError(
                f"underdetermined: {M} samples for {p} unknowns in component {i}; "
                "increase ridge or reduce degree"
            )
        theta = _solve(A, Y[:, i], ridge, fallback_ridge, i)
        if nonneg_eps and theta[0] < 0:
            rest = _solve(A[:, 1:], Y[:, i], ridge, fallback_ridge, i) if p > 1 else np.zeros(0)
            theta = np.concatenate([[0.0], rest])
        eps.append(float(theta[0]))
        tables.append({e: float(c) for e, c in zip(basis, theta[1:])})

    names = tuple(variable_names) if variable_names is not None else None
    return PolyVectorField(
        eps=tuple(eps),
        coeffs=tuple(tables),
        degree=int(degree),
        basis_mode=basis_mode,
        domain=domain,
        scaling=scaling,
        variable_names=names,
        provenance={
            "fit": {
                "samples": M,
                "ridge": format(float(ridge), ".17g"),
                "state_max": [format(float(v), ".17g") for v in X.max(axis=0)],
            }
        },
    )


def _solve(A, b, ridge, fallback_ridge, i):
    theta, rank = lstsq_qr(A, b, ridge)
    if rank < A.shape[1]:
        if ridge > 0:
            raise RankDeficientError(f"component {i}: design singular even with ridge {ridge}")
        if fallback_ridge is None:
            raise RankDeficientError(
                f"component {i}: rank-deficient design (rank {rank} < {A.shape[1]}); "
                "increase ridge or reduce degree"
            )
        warnings.warn(
            f"component {i}: rank-deficient design (rank {rank} < {A.shape[1]}); "
            f"refitting with ridge {fallback_ridge:g}",
            RankDeficiencyWarning,
            stacklevel=3,
        )
        theta, rank = lstsq_qr(A, b, fallback_ridge)
    return theta


def fit_frame(frame: SeriesFrame, degree: int, **kw) -> PolyVectorField:
    """Derivative estimation followed by :func:`fit`, carrying frame metadata."""
    kw.setdefault("scaling", frame.scaling)
    kw.setdefault("variable_names", frame.variable_names)
    return fit(estimate_derivatives(frame), degree, **kw)


def ds_fit_fn(degree: int, **kw):
    """``fit_fn`` for :func:`trendflow.forecast.walk_forward`."""

    def fit_fn(frame: SeriesFrame) -> PolyVectorField:
        return fit_frame(frame, degree, **kw)

    fit_fn.__name__ = f"DS({degree})"
    return fit_fn


def ds_predict_fn(h: float = DEFAULT_H):
    """``predict_fn``: flow the true current state forward by one sampling interval."""

    def predict_fn(model: PolyVectorField, frame: SeriesFrame) -> np.ndarray:
        return advance(model, frame.values[-1], frame.dt, h)

    return predict_fn


@dataclass(frozen=True)
class SelectionRow:
    key: int
    total: float | None
    per_variable: tuple[float, ...] | None
    error: str | None = None


def pick_best(rows: Sequence[SelectionRow], tie_rtol: float) -> SelectionRow:
    """Smallest total error; totals within ``tie_rtol`` of the minimum tie and
    the smallest key wins."""
    ok = [r for r in rows if r.total is not None]
    if not ok:
        raise FitError("every candidate failed: " + "; ".join(f"{r.key}: {r.error}" for r in rows))
    best = min(r.total for r in ok)
    return min((r for r in ok if r.total <= best * (1 + tie_rtol) + 1e-300), key=lambda r: r.key)


def select_degree(
    train: SeriesFrame,
    degrees: Iterable[int] = range(1, 6),
    test_len: int = ev.DEFAULT_TEST_LEN,
    *,
    h: float = DEFAULT_H,
    tie_rtol: float = 1e-6,
    **fit_kw,
) -> tuple[PolyVectorField, list[SelectionRow]]:
    """Score each degree by walk-forward NSE on ``train``; refit the winner on all of it."""
    degrees = sorted(set(int(d) for d in degrees))
    if not degrees:
        raise FitError("no candidate degrees")
    rows = []
    for d in degrees:
        try:
            rep = ev.walk_forward(train, test_len, ds_fit_fn(d, **fit_kw), ds_predict_fn(h), descriptor=f"DS({d})")
            rows.append(SelectionRow(d, rep.total, rep.per_variable))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.info("degree %d failed: %s", d, exc)
            rows.append(SelectionRow(d, None, None, str(exc)))
    best = degrees[0] if len(degrees) == 1 else pick_best(rows, tie_rtol).key
    return fit_frame(train, best, **fit_kw), rows
