"""Uniformly sampled multivariate time series: loading, scaling, splitting and
finite-difference derivative estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class SeriesError(ValueError):
    """Raised for malformed or out-of-contract series input."""


@dataclass(frozen=True)
class ScalingSpec:
    """Record of the unit changes applied to a frame.

    ``factors`` are per-variable divisors applied by :func:`rescale`
    (1.0 means untouched). ``divisors`` and ``adjusters`` name the exogenous
    series a variable was normalized by; ``adjust_mode`` is how the adjuster
    was applied (``"growth"``: divided by a(t)/a(0)).
    """

    factors: tuple[float, ...]
    mode: str = "none"
    divisors: Mapping[str, str] = field(default_factory=dict)
    adjusters: Mapping[str, str] = field(default_factory=dict)
    adjust_mode: str = "growth"

    def __post_init__(self):
        for f in self.factors:
            if not (math.isfinite(f) and f > 0):
                raise SeriesError(f"scale factors must be positive and finite, got {f!r}")

    @classmethod
    def identity(cls, n: int) -> "ScalingSpec":
        return cls(factors=(1.0,) * n)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "factors": [format(f, ".17g") for f in self.factors],
            "divisors": dict(sorted(self.divisors.items())),
            "adjusters": dict(sorted(self.adjusters.items())),
            "adjust_mode": self.adjust_mode,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScalingSpec":
        try:
            return cls(
                factors=tuple(float(f) for f in doc["factors"]),
                mode=str(doc.get("mode", "none")),
                divisors=dict(doc.get("divisors", {})),
                adjusters=dict(doc.get("adjusters", {})),
                adjust_mode=str(doc.get("adjust_mode", "growth")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SeriesError(f"malformed scaling block: {exc}") from exc

    def to_raw(self, scaled: np.ndarray) -> np.ndarray:
        """Undo the :func:`rescale` factors (exogenous normalization is not undone)."""
        return np.asarray(scaled, dtype=float) * np.asarray(self.factors)

    def to_scaled(self, raw: np.ndarray) -> np.ndarray:
        return np.asarray(raw, dtype=float) / np.asarray(self.factors)


@dataclass(frozen=True, eq=False)
class SeriesFrame:
    """A T x n block of observations sampled every ``dt`` time units."""

    variable_names: tuple[str, ...]
    values: np.ndarray
    dt: float = 1.0
    origin_label: str = ""
    scaling: ScalingSpec | None = None
    time_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise SeriesError("values must be a T x n matrix")
        names = tuple(str(v) for v in self.variable_names)
        T, n = values.shape
        if len(names) != n:
            raise SeriesError(f"{len(names)} variable names for {n} columns")
        if len(set(names)) != n:
            raise SeriesError(f"duplicate variable names: {list(names)}")
        if T < 2:
            raise SeriesError(f"a series needs at least 2 rows, got {T}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise SeriesError(f"dt must be positive, got {self.dt!r}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise SeriesError(f"missing value at row {r}, column {names[c]}")
        if self.time_labels is not None and len(self.time_labels) != T:
            raise SeriesError("time_labels length differs from row count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.variable_names.index(name)]
        except ValueError:
            raise SeriesError(f"no variable named {name!r}") from None

    def head(self, rows: int) -> "SeriesFrame":
        """First ``rows`` rows as a new frame (metadata preserved)."""
        return self._slice(slice(0, rows))

    def _slice(self, sl: slice) -> "SeriesFrame":
        labels = None if self.time_labels is None else self.time_labels[sl]
        return SeriesFrame(
            self.variable_names, self.values[sl], self.dt, self.origin_label, self.scaling, labels
        )

    def with_values(self, values: np.ndarray, scaling: ScalingSpec | None = None) -> "SeriesFrame":
        return SeriesFrame(
            self.variable_names,
            values,
            self.dt,
            self.origin_label,
            self.scaling if scaling is None else scaling,
            self.time_labels,
        )


@dataclass(frozen=True, eq=False)
class DerivativeSamples:
    """Paired states and forward-difference derivative estimates."""

    states: np.ndarray
    derivs: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
        if states.shape != derivs.shape:
            raise SeriesError(f"states {states.shape} and derivs {derivs.shape} differ in shape")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "derivs", derivs)

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]


def _parse_float(cell: str, row: int, col: str) -> float:
    text = cell.strip()
    if not text:
        raise SeriesError(f"missing value at row {row}, column {col}")
    try:
        value = float(text)
    except ValueError:
        raise SeriesError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise SeriesError(f"missing value at row {row}, column {col}")
    return value


def load_csv(
    path: str | Path,
    columns: Sequence[str] | Mapping[str, str] | None = None,
    *,
    time_column: str | None = None,
    dt: float = 1.0,
) -> SeriesFrame:
    """Read a header-first CSV into a :class:`SeriesFrame`.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV file with a header row and '.' decimals.
    columns : sequence or mapping, optional
        Columns to load. A mapping renames ``{csv_column: variable_name}``.
        Defaults to every column except ``time_column``.
    time_column : str, optional
        Column kept as row labels only. If omitted and the first header is
        ``time``, ``date``, ``month`` or ``t`` it is used.
    dt : float
        Sampling interval; never inferred from the time column.
    """
    path = Path(path)
    if not path.exists():
        raise SeriesError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise SeriesError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if time_column is None and header and header[0].lower() in {"time", "date", "month", "t"}:
        time_column = header[0]
    if time_column is not None and time_column not in header:
        raise SeriesError(f"{path}: missing column {time_column!r}")

    if columns is None:
        mapping = {h: h for h in header if h != time_column}
    elif isinstance(columns, Mapping):
        mapping = dict(columns)
    else:
        mapping = {c: c for c in columns}
    for col in mapping:
        if col not in header:
            raise SeriesError(f"{path}: missing column {col!r}")
    names = list(mapping.values())
    if len(set(names)) != len(names):
        raise SeriesError(f"duplicate variable names: {names}")
    if len(body) < 2:
        raise SeriesError(f"{path}: need at least 2 data rows, got {len(body)}")

    idx = [header.index(c) for c in mapping]
    values = np.empty((len(body), len(idx)))
    for r, row in enumerate(body):
        for k, (c, name) in enumerate(zip(idx, mapping)):
            cell = row[c] if c < len(row) else ""
            values[r, k] = _parse_float(cell, r, name)
    labels = None
    if time_column is not None:
        t_idx = header.index(time_column)
        labels = tuple(row[t_idx].strip() if t_idx < len(row) else "" for row in body)
    return SeriesFrame(tuple(names), values, dt, origin_label=str(path.name), time_labels=labels)


def write_csv(frame: SeriesFrame, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *frame.variable_names])
        for k, row in enumerate(frame.values):
            label = frame.time_labels[k] if frame.time_labels else format(k * frame.dt, ".17g")
            w.writerow([label, *(format(v, ".17g") for v in row)])


def normalize_by_exogenous(
    frame: SeriesFrame,
    divisors: Mapping[str, SeriesFrame] | None = None,
    adjusters: Mapping[str, SeriesFrame] | None = None,
) -> SeriesFrame:
    """Divide selected variables by exogenous series.

    Variable ``v`` becomes ``v(t) / d(t)``; with an adjuster ``a`` it is
    further divided by the growth factor ``a(t) / a(0)``. Each exogenous
    frame must be single-column and aligned with ``frame`` (same T and dt).
    """
    divisors = dict(divisors or {})
    adjusters = dict(adjusters or {})
    out = np.array(frame.values)

    def series_of(var: str, exo: SeriesFrame, what: str) -> np.ndarray:
        if var not in frame.variable_names:
            raise SeriesError(f"{what} targets unknown variable {var!r}")
        if exo.T != frame.T or exo.dt != frame.dt:
            raise SeriesError(
                f"{what} for {var!r} has length {exo.T} (dt {exo.dt}), frame has {frame.T} (dt {frame.dt})"
            )
        if exo.n != 1:
            raise SeriesError(f"{what} for {var!r} must have exactly one column")
        s = exo.values[:, 0]
        if np.any(s <= 0):
            raise SeriesError(f"{what} for {var!r} must be strictly positive")
        return s

    for var, exo in divisors.items():
        j = frame.variable_names.index(var) if var in frame.variable_names else None
        d = series_of(var, exo, "divisor")
        out[:, j] = out[:, j] / d
    for var, exo in adjusters.items():
        a = series_of(var, exo, "adjuster")
        j = frame.variable_names.index(var)
        out[:, j] = out[:, j] / (a / a[0])

    base = frame.scaling or ScalingSpec.identity(frame.n)
    spec = ScalingSpec(
        factors=base.factors,
        mode=base.mode,
        divisors={**base.divisors, **{v: exo.variable_names[0] for v, exo in divisors.items()}},
        adjusters={**base.adjusters, **{v: exo.variable_names[0] for v, exo in adjusters.items()}},
        adjust_mode=base.adjust_mode,
    )
    return frame.with_values(out, spec)


def rescale(
    frame: SeriesFrame,
    mode: str | Sequence[float] = "max",
    *,
    reference: SeriesFrame | None = None,
) -> SeriesFrame:
    """Divide each variable by a positive factor.

    ``mode`` is ``"max"`` (per-variable maximum of ``reference``, default
    ``frame`` itself), ``"none"`` or an explicit sequence of factors.
    """
    n = frame.n
    if isinstance(mode, str):
        if mode == "none":
            factors = np.ones(n)
        elif mode == "max":
            src = (reference or frame).values
            factors = src.max(axis=0)
            for name, f in zip(frame.variable_names, factors):
                if not f > 0:
                    raise SeriesError(f"variable {name!r} has no positive maximum; cannot max-scale")
        else:
            raise SeriesError(f"unknown rescale mode {mode!r}")
        label = mode
    else:
        factors = np.asarray(mode, dtype=float)
        if factors.shape != (n,):
            raise SeriesError(f"expected {n} scale factors, got {factors.shape}")
        if np.any(~np.isfinite(factors)) or np.any(factors <= 0):
            raise SeriesError("explicit scale factors must be positive")
        label = "explicit"

    base = frame.scaling or ScalingSpec.identity(n)
    spec = ScalingSpec(
        factors=tuple(float(b * f) for b, f in zip(base.factors, factors)),
        mode=label if label != "none" else base.mode,
        divisors=base.divisors,
        adjusters=base.adjusters,
        adjust_mode=base.adjust_mode,
    )
    return frame.with_values(frame.values / factors, spec)


def estimate_derivatives(frame: SeriesFrame) -> DerivativeSamples:
    """Forward differences, each paired with its left-endpoint state."""
    v = frame.values
    if v.shape[0] < 2:
        raise SeriesError("need at least 2 rows to estimate derivatives")
    return DerivativeSamples(states=v[:-1], derivs=(v[1:] - v[:-1]) / frame.dt, dt=frame.dt)


def split(frame: SeriesFrame, test_len: int) -> tuple[SeriesFrame, SeriesFrame]:
    """Split into an earlier training block and the final ``test_len`` rows."""
    T = frame.T
    if not (isinstance(test_len, (int, np.integer)) and 2 <= test_len <= T - 3):
        raise SeriesError(f"test_len must be in [2, {T - 3}] for T={T}, got {test_len!r}")
    cut = T - int(test_len)
    return frame._slice(slice(0, cut)), frame._slice(slice(cut, T))


def concat(first: SeriesFrame, second: SeriesFrame) -> SeriesFrame:
    if first.variable_names != second.variable_names or first.dt != second.dt:
        raise SeriesError("frames differ in variables or dt")
    labels = None
    if first.time_labels is not None and second.time_labels is not None:
        labels = first.time_labels + second.time_labels
    return SeriesFrame(
        first.variable_names,
        np.vstack([first.values, second.values]),
        first.dt,
        first.origin_label,
        first.scaling,
        labels,
    )
