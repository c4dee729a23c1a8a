"""Fixed points, their stability, basins of attraction, separatrices and the
trending-flow sweep for polynomial vector fields."""
from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .field import Domain, PolyVectorField, evaluate, jacobian
from .integrate import (
    CONV_COUNT,
    CONV_RADIUS,
    DEFAULT_H,
    FIELD_TOL,
    HORIZON,
    Termination,
    terminations,
    trajectory,
)

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
DEDUP_RADIUS = 1e-6
SEED_GRID = 20
HYPERBOLICITY_TOL = 1e-8
FIXED_POINT_TOL = 1e-8
SEPARATRIX_OFFSET = 1e-6
SEPARATRIX_H = 0.005
SEPARATRIX_HORIZON = 200.0

ATTRACTOR_NODE = "attractor-node"
SPIRAL_ATTRACTOR = "spiral attractor"
REPELLER_NODE = "repeller-node"
SPIRAL_REPELLER = "spiral repeller"
SADDLE = "saddle"
NON_HYPERBOLIC = "non-hyperbolic"
ATTRACTING = (ATTRACTOR_NODE, SPIRAL_ATTRACTOR)


class PortraitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FixedPointRecord:
    location: np.ndarray
    residual: float
    eigenvalues: np.ndarray
    kind: str
    inside: bool = True
    nullcline_confirmed: bool | None = None

    @property
    def is_attractor(self) -> bool:
        return self.kind in ATTRACTING

    def to_dict(self) -> dict:
        f = lambda v: format(float(v), ".17g")  # noqa: E731
        return {
            "location": [f(v) for v in self.location],
            "residual": f(self.residual),
            "eigenvalues": [{"re": f(z.real), "im": f(z.imag)} for z in self.eigenvalues],
            "class": self.kind,
            "inside": self.inside,
            "nullcline_confirmed": self.nullcline_confirmed,
        }


def classify_eigenvalues(eigs: Sequence[complex], hyperbolicity_tol: float = HYPERBOLICITY_TOL) -> str:
    eigs = np.asarray(eigs, dtype=complex)
    re = eigs.real
    if np.any(np.abs(re) < hyperbolicity_tol):
        return NON_HYPERBOLIC
    spiral = bool(np.any(np.abs(eigs.imag) > hyperbolicity_tol))
    if np.all(re < 0):
        return SPIRAL_ATTRACTOR if spiral else ATTRACTOR_NODE
    if np.all(re > 0):
        return SPIRAL_REPELLER if spiral else REPELLER_NODE
    return SADDLE


def _sorted_eigs(J: np.ndarray) -> np.ndarray:
    eigs = np.linalg.eigvals(J)
    # deterministic order: real part, then imaginary part
    return eigs[np.lexsort((eigs.imag, eigs.real))]


def classify_fixed_point(
    model: PolyVectorField,
    point,
    *,
    tol: float = FIXED_POINT_TOL,
    hyperbolicity_tol: float = HYPERBOLICITY_TOL,
    box: Domain | None = None,
) -> FixedPointRecord:
    """Eigenvalues of the Jacobian at ``point`` and the resulting stability class."""
    x = np.asarray(point, dtype=float)
    residual = float(np.linalg.norm(evaluate(model, x)))
    if not residual < tol:
        raise PortraitError(f"{x.tolist()} is not a fixed point (field norm {residual:.3g} >= {tol:g})")
    eigs = _sorted_eigs(jacobian(model, x))
    inside = True if box is None else _in_box(x[None, :], box)[0]
    return FixedPointRecord(x, residual, eigs, classify_eigenvalues(eigs, hyperbolicity_tol), bool(inside))


# -- boxes and grids ---------------------------------------------------------


def working_box(model: PolyVectorField, factor: float = 10.0, data_max: Sequence[float] | None = None) -> Domain:
    """Bounded region for analysis: the model domain if bounded, otherwise
    ``[lower, factor * data_max]`` per axis (data maximum from the fit
    provenance, else 1)."""
    dom = model.domain or Domain.positive_orthant(model.n)
    if dom.bounded:
        return dom
    if data_max is None:
        raw = model.provenance.get("fit", {}).get("state_max") if isinstance(model.provenance, dict) else None
        data_max = [float(v) for v in raw] if raw else [1.0] * model.n
    upper = [u if math.isfinite(u) else factor * max(m, 1e-12) for u, m in zip(dom.upper, data_max)]
    lower = [lo if math.isfinite(lo) else -u for lo, u in zip(dom.lower, upper)]
    return Domain(tuple(lower), tuple(upper), dom.escape_margin)


def grid_points(box: Domain, grid: int | Sequence[int], interior_only: bool = False) -> np.ndarray:
    """Regular node grid over ``box`` in C order (last axis fastest)."""
    if not box.bounded:
        raise PortraitError("grid needs a bounded box")
    counts = [grid] * box.n if isinstance(grid, (int, np.integer)) else list(grid)
    if len(counts) != box.n or any(c < 2 for c in counts):
        raise PortraitError(f"grid needs >= 2 points per axis, got {counts}")
    axes = []
    for lo, hi, c in zip(box.lower, box.upper, counts):
        ax = np.linspace(lo, hi, c)
        axes.append(ax[1:-1] if interior_only else ax)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def _in_box(X: np.ndarray, box: Domain) -> np.ndarray:
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    slack = 1e-9 * np.maximum(1.0, hi - lo)
    return np.all((X >= lo - slack) & (X <= hi + slack), axis=1)


# -- fixed points ------------------------------------------------------------


def _newton(model: PolyVectorField, seeds: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched Newton iteration; returns (roots, residuals) for converged seeds."""
    X = np.array(seeds, dtype=float)
    active = np.arange(X.shape[0])
    done, skipped = [], 0
    for _ in range(max_iter + 1):
        if active.size == 0:
            break
        F = evaluate(model, X[active])
        res = np.linalg.norm(F, axis=1)
        ok = res < tol
        done.extend(active[ok].tolist())
        active, F = active[~ok], F[~ok]
        if active.size == 0:
            break
        J = jacobian(model, X[active])
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(J)
        regular = np.isfinite(cond) & (cond < 1e13)
        skipped += int(np.sum(~regular))
        active, F, J = active[regular], F[regular], J[regular]
        if active.size == 0:
            break
        step = np.linalg.solve(J, -F[:, :, None])[:, :, 0]
        X[active] += step
        sane = np.all(np.isfinite(X[active]), axis=1) & (np.abs(X[active]).max(axis=1) < 1e8)
        active = active[sane]
    if skipped:
        log.debug("newton: %d seeds skipped at singular Jacobians", skipped)
    roots = X[sorted(done)]
    # two polishing steps, kept only where they lower the residual
    for _ in range(2):
        if roots.size == 0:
            break
        F = evaluate(model, roots)
        J = jacobian(model, roots)
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(J)
        good = np.isfinite(cond) & (cond < 1e13)
        cand = roots.copy()
        if np.any(good):
            cand[good] = roots[good] + np.linalg.solve(J[good], -F[good][:, :, None])[:, :, 0]
        better = np.all(np.isfinite(cand), axis=1)
        better[better] = np.linalg.norm(evaluate(model, cand[better]), axis=1) < np.linalg.norm(F[better], axis=1)
        roots[better] = cand[better]
    return roots, np.linalg.norm(evaluate(model, roots), axis=1) if roots.size else np.zeros(0)


def _dedup(roots: np.ndarray, residuals: np.ndarray, radius: float) -> list[int]:
    keep: list[int] = []
    for k in np.argsort(residuals, kind="stable"):
        if all(np.linalg.norm(roots[k] - roots[j]) > radius for j in keep):
            keep.append(int(k))
    return keep


def nullcline_fixed_points(model: PolyVectorField, box: Domain, samples: int = 4001) -> np.ndarray:
    """Planar fixed points as intersections of ``x = -V1(y)/eps1`` and ``y = -V2(x)/eps2``.

    Scans ``g(x) = x + V1(y(x))/eps1`` with ``y(x) = -V2(x)/eps2`` for sign
    changes over the box's x-range and refines each bracket with Brent's
    method. Independent of the Newton path.
    """
    if model.n != 2:
        raise PortraitError("nullcline oracle is planar only")
    e1, e2 = model.eps
    if e1 == 0 or e2 == 0:
        raise PortraitError("nullcline oracle needs both self-rates nonzero")

    def y_of(x):
        return -model.coupling(1, np.column_stack([x, np.zeros_like(x)])) / e2

    def g(x):
        y = y_of(x)
        return x + model.coupling(0, np.column_stack([np.zeros_like(y), y])) / e1

    xs = np.linspace(box.lower[0], box.upper[0], samples)
    gs = g(xs)
    roots = [xs[k] for k in np.flatnonzero(gs == 0)]
    for k in np.flatnonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) < 0):
        roots.append(brentq(lambda t: g(np.array([t]))[0], xs[k], xs[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    pts = np.array([[x, y_of(np.array([x]))[0]] for x in sorted(roots)]).reshape(-1, 2)
    return pts[_in_box(pts, box)] if pts.size else pts


def find_fixed_points(
    model: PolyVectorField,
    box: Domain | None = None,
    seed_grid: int = SEED_GRID,
    tol: float = NEWTON_TOL,
    *,
    max_iter: int = NEWTON_MAX_ITER,
    dedup_radius: float = DEDUP_RADIUS,
    hyperbolicity_tol: float = HYPERBOLICITY_TOL,
    cross_check: bool = True,
) -> list[FixedPointRecord]:
    """Fixed points inside ``box`` from Newton runs seeded on a regular grid.

    Planar models with nonzero self-rates are cross-checked against
    :func:`nullcline_fixed_points`; roots the oracle finds but Newton missed
    are polished and added. The origin is always reported. Records are
    ordered by distance from the origin.
    """
    box = box or working_box(model)
    if not box.bounded:
        raise PortraitError("find_fixed_points needs a bounded box")
    seeds = grid_points(box, seed_grid)
    roots, res = _newton(model, seeds, tol, max_iter)
    inside = _in_box(roots, box) if roots.size else np.zeros(0, dtype=bool)
    roots, res = roots[inside], res[inside]
    origin = np.zeros((1, model.n))
    roots = np.vstack([origin, roots])
    res = np.concatenate([[0.0], res])

    confirmed = None
    if cross_check and model.n == 2 and all(e != 0 for e in model.eps):
        oracle = nullcline_fixed_points(model, box)
        keep = _dedup(roots, res, dedup_radius)
        roots, res = roots[keep], res[keep]
        extra = [p for p in oracle if np.min(np.linalg.norm(roots - p, axis=1)) > dedup_radius]
        if extra:
            log.warning("newton missed %d fixed point(s) found on the nullclines; adding them", len(extra))
            more, more_res = _newton(model, np.array(extra), tol, max_iter)
            roots, res = np.vstack([roots, more]), np.concatenate([res, more_res])
        confirmed = [
            bool(oracle.size and np.min(np.linalg.norm(oracle - r, axis=1)) < 1e-6) for r in roots
        ]
        for r, c in zip(roots, confirmed):
            if not c:
                log.warning("fixed point %s not confirmed by the nullcline scan", r.tolist())

    keep = _dedup(roots, res, dedup_radius)
    order = sorted(keep, key=lambda k: (round(float(np.linalg.norm(roots[k])), 12), tuple(roots[k])))
    records = []
    for k in order:
        eigs = _sorted_eigs(jacobian(model, roots[k]))
        records.append(
            FixedPointRecord(
                location=roots[k],
                residual=float(res[k]),
                eigenvalues=eigs,
                kind=classify_eigenvalues(eigs, hyperbolicity_tol),
                inside=bool(_in_box(roots[k][None, :], box)[0]),
                nullcline_confirmed=None if confirmed is None else confirmed[k],
            )
        )
    return records


# -- basins and separatrices -------------------------------------------------


@dataclass(frozen=True, eq=False)
class BasinMap:
    samples: np.ndarray
    outcomes: tuple[Termination, ...]
    fixed_points: tuple[FixedPointRecord, ...]

    @property
    def labels(self) -> list[str]:
        return [outcome_label(t) for t in self.outcomes]


def outcome_label(t: Termination) -> str:
    if t.kind == "converged":
        return f"fp{t.fixed_point}"
    return "escaped" if t.kind == "escaped" else "undecided"


def _clip_to_box(path: np.ndarray, box: Domain) -> np.ndarray:
    """Drop points after the first exit and end the polyline on the boundary."""
    inside = _in_box(path, box)
    if inside.all():
        return path
    k = int(np.argmin(inside))
    if k == 0:
        return path[:0]
    a, b = path[k - 1], path[k]
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)
    t = 1.0
    for j in range(path.shape[1]):
        d = b[j] - a[j]
        if b[j] > hi[j] and d > 0:
            t = min(t, (hi[j] - a[j]) / d)
        if b[j] < lo[j] and d < 0:
            t = min(t, (lo[j] - a[j]) / d)
    return np.vstack([path[:k], a + t * (b - a)])


def _decimate(path: np.ndarray, max_points: int) -> np.ndarray:
    if path.shape[0] <= max_points:
        return path
    idx = np.unique(np.linspace(0, path.shape[0] - 1, max_points).round().astype(int))
    return path[idx]


def separatrices(
    model: PolyVectorField,
    box: Domain,
    fixed_points: Sequence[FixedPointRecord],
    *,
    offset: float = SEPARATRIX_OFFSET,
    h: float = SEPARATRIX_H,
    horizon: float = SEPARATRIX_HORIZON,
    max_points: int = 4000,
) -> list[np.ndarray]:
    """Stable manifolds of planar saddles, traced in reversed time from
    ``saddle +- offset * stable eigenvector``; one polyline per branch,
    starting at the saddle."""
    if model.n != 2:
        return []
    back = model.reversed()
    fps = np.array([fp.location for fp in fixed_points]).reshape(-1, 2)
    out = []
    for fp in fixed_points:
        if fp.kind != SADDLE or not fp.inside:
            continue
        w, V = np.linalg.eig(jacobian(model, fp.location))
        k = int(np.argmin(w.real))
        v = np.real(V[:, k])
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        for sign in (1.0, -1.0):
            start = fp.location + sign * offset * v
            if not _in_box(start[None, :], box)[0]:
                continue
            others = fps[np.linalg.norm(fps - fp.location, axis=1) > 0]
            tr = trajectory(back, start, horizon, h, Domain(box.lower, box.upper), others)
            path = _clip_to_box(np.vstack([fp.location, tr.states]), box)
            if path.shape[0] >= 2:
                out.append(_decimate(path, max_points))
    return out


def basin_and_separatrix(
    model: PolyVectorField,
    box: Domain | None = None,
    grid: int | Sequence[int] = 20,
    horizon: float = HORIZON,
    *,
    fixed_points: Sequence[FixedPointRecord] | None = None,
    h: float = DEFAULT_H,
    conv_radius: float = CONV_RADIUS,
    field_tol: float = FIELD_TOL,
    conv_count: int = CONV_COUNT,
    samples: np.ndarray | None = None,
) -> tuple[BasinMap, list[np.ndarray]]:
    """Label grid samples by where their trajectory ends; trace saddle separatrices."""
    box = box or working_box(model)
    fps = list(fixed_points) if fixed_points is not None else find_fixed_points(model, box)
    X = grid_points(box, grid) if samples is None else np.atleast_2d(samples)
    locs = np.array([fp.location for fp in fps]).reshape(-1, model.n)
    outcomes = terminations(
        model, X, horizon, h, box, locs, conv_radius=conv_radius, field_tol=field_tol, conv_count=conv_count
    )
    return BasinMap(X, tuple(outcomes), tuple(fps)), separatrices(model, box, fps)


# -- trending flow -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrendingReport:
    box: Domain
    grid: tuple[int, ...]
    interior_only: bool
    horizon: float
    samples: np.ndarray
    outcomes: tuple[Termination, ...]
    fixed_points: tuple[FixedPointRecord, ...]
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def counts(self) -> dict[str, int]:
        return {"converged": self.converged, "escaped": self.escaped, "undecided": self.undecided}

    @property
    def undecided(self) -> int:
        return sum(t.kind == "horizon" for t in self.outcomes)

    @property
    def converged(self) -> int:
        return sum(t.kind == "converged" for t in self.outcomes)

    @property
    def escaped(self) -> int:
        return sum(t.kind == "escaped" for t in self.outcomes)

    @property
    def trending(self) -> bool:
        return self.undecided == 0

    @property
    def verdict(self) -> str:
        return "trending-within-horizon" if self.trending else "not-trending-within-horizon"

    def to_dict(self) -> dict:
        f = lambda v: format(float(v), ".17g")  # noqa: E731
        per_fp = Counter(t.fixed_point for t in self.outcomes if t.kind == "converged")
        return {
            "kind": "trending_report",
            "box": self.box.to_dict(),
            "grid": list(self.grid),
            "interior_only": self.interior_only,
            "horizon": f(self.horizon),
            "counts": self.counts,
            "converged_to": {str(k): per_fp[k] for k in sorted(per_fp)},
            "verdict": self.verdict,
            "notes": list(self.notes),
            "fixed_points": [fp.to_dict() for fp in self.fixed_points],
            "samples": [
                {"state": [f(v) for v in x], "outcome": outcome_label(t), "time": f(t.time)}
                for x, t in zip(self.samples, self.outcomes)
            ],
        }


def theorem_notes(model: PolyVectorField, box: Domain) -> list[str]:
    """Analytic shortcuts that guarantee trending flow, checked on a probe grid
    of the box (the couplings must be nonnegative there)."""
    P = grid_points(box, 41 if model.n <= 2 else 11)
    couplings_ok = all(np.all(model.coupling(i, P) >= -1e-12) for i in range(model.n))
    notes = []
    if couplings_ok and all(e >= 0 for e in model.eps):
        notes.append("trending by cited theorem (eps>=0): all self-rates nonnegative, couplings nonnegative on the box")
    if couplings_ok and model.n == 2:
        notes.append("trending by cited theorem (n=2): planar cross-coupled form, couplings nonnegative on the box")
    return notes


def trending_check(
    model: PolyVectorField,
    box: Domain | None = None,
    grid: int | Sequence[int] = 21,
    horizon: float = HORIZON,
    *,
    interior_only: bool = False,
    fixed_points: Sequence[FixedPointRecord] | None = None,
    h: float = DEFAULT_H,
    conv_radius: float = CONV_RADIUS,
    field_tol: float = FIELD_TOL,
    conv_count: int = CONV_COUNT,
) -> TrendingReport:
    """Integrate every grid sample; the flow is trending within the horizon iff
    no sample is left undecided."""
    box = box or working_box(model)
    fps = list(fixed_points) if fixed_points is not None else find_fixed_points(model, box)
    X = grid_points(box, grid, interior_only)
    locs = np.array([fp.location for fp in fps]).reshape(-1, model.n)
    outcomes = terminations(
        model, X, horizon, h, box, locs, conv_radius=conv_radius, field_tol=field_tol, conv_count=conv_count
    )
    counts = (grid,) * model.n if isinstance(grid, (int, np.integer)) else tuple(grid)
    return TrendingReport(
        box, tuple(int(c) for c in counts), interior_only, float(horizon), X, tuple(outcomes), tuple(fps),
        tuple(theorem_notes(model, box)),
    )


# -- portrait shape checks ---------------------------------------------------


def three_point_portrait(records: Sequence[FixedPointRecord]) -> bool:
    """Origin a spiral attractor, a nearby saddle ``a`` and a farther
    attractor node ``b`` with both coordinates above those of ``a``."""
    inside = [r for r in records if r.inside]
    if len(inside) != 3:
        return False
    o, a, b = inside
    if np.linalg.norm(o.location) > DEDUP_RADIUS or o.kind != SPIRAL_ATTRACTOR:
        return False
    return a.kind == SADDLE and b.kind == ATTRACTOR_NODE and bool(np.all(b.location > a.location))


def nullcline_polylines(model: PolyVectorField, box: Domain, samples: int = 2001) -> list[dict]:
    """Planar nullclines ``x = -V1(y)/eps1`` and ``y = -V2(x)/eps2`` as
    polylines, split wherever they leave the box."""
    if model.n != 2:
        return []
    out = []
    for i in range(2):
        if model.eps[i] == 0:
            continue
        j = 1 - i
        s = np.linspace(box.lower[j], box.upper[j], samples)
        P = np.zeros((samples, 2))
        P[:, j] = s
        P[:, i] = -model.coupling(i, P) / model.eps[i]
        ok = _in_box(P, box)
        segments = []
        for key, grp in itertools.groupby(range(samples), key=lambda k: ok[k]):
            idx = list(grp)
            if key and len(idx) >= 2:
                segments.append(P[idx])
        out.append({"component": i, "segments": segments})
    return out


def distance_to_polyline(p: np.ndarray, poly: np.ndarray) -> float:
    a, b = poly[:-1], poly[1:]
    d = b - a
    L = (d * d).sum(axis=1)
    t = np.where(L > 0, ((p - a) * d).sum(axis=1) / np.where(L > 0, L, 1), 0.0)
    t = np.clip(t, 0, 1)
    proj = a + t[:, None] * d
    return float(np.min(np.linalg.norm(proj - p, axis=1)))
