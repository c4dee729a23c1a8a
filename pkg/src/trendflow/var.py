"""Vector autoregression baseline, fitted equation by equation with OLS."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import forecast as ev
from ._lsq import lstsq_qr
from .fit import SelectionRow, pick_best
from .series import SeriesFrame


class VarError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VarModel:
    """``x_t = intercept + sum_i lag_matrices[i-1] @ x_{t-i}``."""

    intercept: np.ndarray
    lag_matrices: tuple[np.ndarray, ...]
    fitted_on: int = 0
    variable_names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.intercept, dtype=float).reshape(-1)
        mats = tuple(np.asarray(A, dtype=float) for A in self.lag_matrices)
        if not mats:
            raise VarError("VAR needs at least one lag")
        n = c.shape[0]
        for A in mats:
            if A.shape != (n, n):
                raise VarError(f"lag matrix shape {A.shape}, expected {(n, n)}")
        object.__setattr__(self, "intercept", c)
        object.__setattr__(self, "lag_matrices", mats)

    @property
    def p(self) -> int:
        return len(self.lag_matrices)

    @property
    def n(self) -> int:
        return self.intercept.shape[0]

    def to_dict(self) -> dict:
        f = lambda v: format(float(v), ".17g")  # noqa: E731
        return {
            "kind": "var_model",
            "dimension": self.n,
            "lag": self.p,
            "variables": list(self.variable_names or []),
            "intercept": [f(v) for v in self.intercept],
            "lag_matrices": [[[f(v) for v in row] for row in A] for A in self.lag_matrices],
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "VarModel":
        if doc.get("kind") != "var_model":
            raise VarError("not a var_model document")
        try:
            return cls(
                intercept=np.array([float(v) for v in doc["intercept"]]),
                lag_matrices=tuple(
                    np.array([[float(v) for v in row] for row in A]) for A in doc["lag_matrices"]
                ),
                fitted_on=int(doc.get("fitted_on", 0)),
                variable_names=tuple(doc["variables"]) or None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise VarError(f"malformed var_model: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def lagged_design(values: np.ndarray, p: int, intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Regressors ``[1, x_{t-1}, ..., x_{t-p}]`` and targets ``x_t`` for t = p..T-1."""
    T = values.shape[0]
    blocks = [values[p - i : T - i] for i in range(1, p + 1)]
    X = np.hstack(blocks)
    if intercept:
        X = np.hstack([np.ones((T - p, 1)), X])
    return X, values[p:]


def fit_var(frame: SeriesFrame, p: int, *, intercept: bool = True) -> VarModel:
    if not (isinstance(p, (int, np.integer)) and p >= 1):
        raise VarError(f"lag order must be >= 1, got {p!r}")
    T, n = frame.values.shape
    need = n * p + p + 2
    if T < need:
        raise VarError(f"VAR({p}) on {n} variables needs at least {need} rows, got {T}")
    X, Y = lagged_design(frame.values, p, intercept)
    coefs = np.empty((X.shape[1], n))
    for j in range(n):
        theta, rank = lstsq_qr(X, Y[:, j])
        if rank < X.shape[1]:
            raise VarError(f"rank-deficient VAR({p}) regressors (rank {rank} < {X.shape[1]}); reduce p")
        coefs[:, j] = theta
    off = 1 if intercept else 0
    c = coefs[0] if intercept else np.zeros(n)
    mats = tuple(coefs[off + i * n : off + (i + 1) * n].T for i in range(p))
    return VarModel(c, mats, fitted_on=T, variable_names=frame.variable_names)


def predict_one(model: VarModel, history) -> np.ndarray:
    """One-step forecast; ``history`` rows are in time order, the last is most recent."""
    H = np.atleast_2d(np.asarray(history, dtype=float))
    if H.shape[0] < model.p:
        raise VarError(f"history has {H.shape[0]} rows, VAR({model.p}) needs {model.p}")
    if H.shape[1] != model.n:
        raise VarError(f"history has {H.shape[1]} variables, model has {model.n}")
    out = model.intercept.copy()
    for i, A in enumerate(model.lag_matrices, start=1):
        out = out + A @ H[-i]
    return out


def var_fit_fn(p: int, **kw):
    def fit_fn(frame: SeriesFrame) -> VarModel:
        return fit_var(frame, p, **kw)

    fit_fn.__name__ = f"VAR({p})"
    return fit_fn


def var_predict(model: VarModel, frame: SeriesFrame) -> np.ndarray:
    return predict_one(model, frame.values)


def select_lag(
    frame: SeriesFrame,
    p_range: Iterable[int] = range(1, 5),
    test_len: int = ev.DEFAULT_TEST_LEN,
    *,
    tie_rtol: float = 1e-6,
    **fit_kw,
) -> tuple[VarModel, list[SelectionRow]]:
    """Lag order by walk-forward NSE (smallest p on ties), refit on all of ``frame``."""
    lags = sorted(set(int(p) for p in p_range))
    if not lags:
        raise VarError("no candidate lags")
    rows = []
    for p in lags:
        try:
            rep = ev.walk_forward(frame, test_len, var_fit_fn(p, **fit_kw), var_predict, descriptor=f"VAR({p})")
            rows.append(SelectionRow(p, rep.total, rep.per_variable))
        except (ValueError, np.linalg.LinAlgError) as exc:
            rows.append(SelectionRow(p, None, None, str(exc)))
    best = lags[0] if len(lags) == 1 else pick_best(rows, tie_rtol).key
    return fit_var(frame, best, **fit_kw), rows
