"""Portrait export: a JSON document with field samples, fixed points,
nullclines, separatrices and trajectories, and a standalone SVG figure."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .field import Domain, PolyVectorField, evaluate
from .integrate import trajectory
from .portrait import (
    FixedPointRecord,
    TrendingReport,
    find_fixed_points,
    grid_points,
    nullcline_polylines,
    separatrices,
    trending_check,
    working_box,
)

log = logging.getLogger(__name__)

CLASS_COLORS = {
    "attractor-node": "#1a9641",
    "spiral attractor": "#66bd63",
    "repeller-node": "#d7191c",
    "spiral repeller": "#fdae61",
    "saddle": "#2b83ba",
    "non-hyperbolic": "#7b3294",
}


def _f(v: float) -> str:
    return format(float(v), ".17g")


def _pts(a: np.ndarray) -> list[list[str]]:
    return [[_f(v) for v in row] for row in a]


def export_portrait(
    model: PolyVectorField,
    box: Domain | None = None,
    grid: int = 20,
    *,
    fixed_points: Sequence[FixedPointRecord] | None = None,
    trajectory_starts: np.ndarray | None = None,
    trajectory_grid: int | None = None,
    trajectory_horizon: float = 50.0,
    trending: TrendingReport | bool = True,
    trending_grid: int | None = None,
    model_ref: str = "",
) -> tuple[dict, str | None, list[str]]:
    """Build the portrait document and, for n <= 3, its SVG rendering.

    Returns ``(document, svg_text_or_None, notices)``.
    """
    box = box or working_box(model)
    if not box.bounded:
        raise ValueError("export_portrait needs a bounded box")
    notices: list[str] = []
    fps = list(fixed_points) if fixed_points is not None else find_fixed_points(model, box)

    X = grid_points(box, grid)
    F = evaluate(model, X)

    if trajectory_starts is None:
        g = trajectory_grid or (4 if model.n <= 2 else 3)
        trajectory_starts = grid_points(box, g + 2, interior_only=True)
    locs = np.array([fp.location for fp in fps]).reshape(-1, model.n)
    trajs = []
    for s in np.atleast_2d(trajectory_starts):
        tr = trajectory(model, s, trajectory_horizon, domain=box, fixed_points=locs)
        path = tr.states[:: max(1, tr.states.shape[0] // 400)]
        if not np.array_equal(path[-1], tr.states[-1]):
            path = np.vstack([path, tr.states[-1]])
        trajs.append({"start": [_f(v) for v in s], "termination": tr.termination.describe(), "path": _pts(path)})

    nulls = nullcline_polylines(model, box)
    seps = separatrices(model, box, fps)

    if trending is True:
        tg = trending_grid or (11 if model.n <= 2 else 5)
        trending = trending_check(model, box, tg, fixed_points=fps)
    trend_doc = trending.to_dict() if isinstance(trending, TrendingReport) else None
    if trend_doc is not None:
        trend_doc.pop("samples", None)
        trend_doc.pop("fixed_points", None)

    doc = {
        "kind": "portrait",
        "model_ref": model_ref,
        "variables": list(model.names),
        "box": box.to_dict(),
        "grid": grid,
        "field_samples": [
            {"state": [_f(v) for v in x], "field": [_f(v) for v in f]} for x, f in zip(X, F)
        ],
        "fixed_points": [fp.to_dict() for fp in fps],
        "nullclines": [
            {"component": nc["component"], "segments": [_pts(s) for s in nc["segments"]]} for nc in nulls
        ],
        "separatrices": [_pts(s) for s in seps],
        "trajectories": trajs,
        "trending_report": trend_doc,
    }

    svg = None
    if model.n > 3:
        notices.append(f"SVG skipped: dimension {model.n} > 3 (JSON written)")
    else:
        svg = render_svg(model, box, X, F, fps, nulls, seps, [np.array(t["path"], dtype=float) for t in trajs])
    for msg in notices:
        log.info(msg)
    return doc, svg, notices


class _Panel:
    def __init__(self, x0, y0, size, box: Domain, axes: tuple[int, int]):
        self.x0, self.y0, self.size = x0, y0, size
        self.i, self.j = axes
        self.lo = (box.lower[self.i], box.lower[self.j])
        self.hi = (box.upper[self.i], box.upper[self.j])

    def map(self, p) -> tuple[float, float]:
        u = (p[self.i] - self.lo[0]) / (self.hi[0] - self.lo[0])
        v = (p[self.j] - self.lo[1]) / (self.hi[1] - self.lo[1])
        return self.x0 + u * self.size, self.y0 + (1 - v) * self.size

    def scale(self) -> tuple[float, float]:
        return self.size / (self.hi[0] - self.lo[0]), self.size / (self.hi[1] - self.lo[1])


def _c(v: float) -> str:
    return f"{v:.2f}"


def _polyline(panel: _Panel, pts: np.ndarray, style: str) -> str:
    coords = " ".join(f"{_c(a)},{_c(b)}" for a, b in (panel.map(p) for p in pts))
    return f'<polyline points="{coords}" fill="none" {style}/>'


def render_svg(model, box, X, F, fps, nulls, seps, trajs) -> str:
    size, margin = 420, 50
    pairs = [(0, 1)] if model.n == 2 else [(0, 1), (0, 2), (1, 2)] if model.n == 3 else [(0, 0)]
    width = margin + len(pairs) * (size + margin)
    height = size + 2 * margin + 40
    names = model.names
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        '<defs><marker id="arrow" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="#555"/></marker></defs>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for k, axes in enumerate(pairs):
        panel = _Panel(margin + k * (size + margin), margin, size, box, axes)
        i, j = axes
        out.append(f'<g id="panel-{k}">')
        out.append(
            f'<rect x="{panel.x0}" y="{panel.y0}" width="{size}" height="{size}" fill="none" stroke="#333"/>'
        )
        out.append(f'<text x="{panel.x0 + size / 2}" y="{panel.y0 + size + 30}" text-anchor="middle">{names[i]}</text>')
        out.append(
            f'<text x="{panel.x0 - 35}" y="{panel.y0 + size / 2}" text-anchor="middle" '
            f'transform="rotate(-90 {panel.x0 - 35} {panel.y0 + size / 2})">{names[j] if model.n > 1 else ""}</text>'
        )
        for val, anchor in ((panel.lo, "start"), (panel.hi, "end")):
            px = panel.x0 if anchor == "start" else panel.x0 + size
            out.append(f'<text x="{px}" y="{panel.y0 + size + 14}" text-anchor="{anchor}">{val[0]:g}</text>')
        out.append(f'<text x="{panel.x0 - 4}" y="{panel.y0 + size}" text-anchor="end">{panel.lo[1]:g}</text>')
        out.append(f'<text x="{panel.x0 - 4}" y="{panel.y0 + 10}" text-anchor="end">{panel.hi[1]:g}</text>')

        # quiver on the plane where the remaining coordinates sit at their lower bound
        others = [a for a in range(model.n) if a not in axes]
        on_plane = np.ones(X.shape[0], dtype=bool)
        for a in others:
            on_plane &= np.isclose(X[:, a], box.lower[a])
        Xp, Fp = X[on_plane], F[on_plane]
        if Xp.shape[0]:
            sx, sy = panel.scale()
            vx, vy = Fp[:, i] * sx, -Fp[:, j] * sy
            mag = np.hypot(vx, vy)
            cell = size / max(2, round(np.sqrt(Xp.shape[0])))
            ref = mag.max() if mag.size and mag.max() > 0 else 1.0
            for p, dx, dy, m in zip(Xp, vx, vy, mag):
                if m == 0:
                    continue
                L = 0.8 * cell * (0.25 + 0.75 * (m / ref) ** 0.5)
                x1, y1 = panel.map(p)
                out.append(
                    f'<line x1="{_c(x1)}" y1="{_c(y1)}" x2="{_c(x1 + L * dx / m)}" y2="{_c(y1 + L * dy / m)}" '
                    'stroke="#999" stroke-width="0.8" marker-end="url(#arrow)"/>'
                )
        if model.n == 2:
            for nc in nulls:
                color = "#e66101" if nc["component"] == 0 else "#5e3c99"
                for seg in nc["segments"]:
                    out.append(_polyline(panel, seg, f'stroke="{color}" stroke-width="1.5" stroke-dasharray="5,3"'))
            for s in seps:
                out.append(_polyline(panel, s, 'stroke="#2b83ba" stroke-width="2"'))
        for t in trajs:
            out.append(_polyline(panel, t, 'stroke="#d01c8b" stroke-width="1" stroke-opacity="0.7"'))
        for fp in fps:
            x1, y1 = panel.map(fp.location)
            color = CLASS_COLORS.get(fp.kind, "#000")
            out.append(
                f'<circle cx="{_c(x1)}" cy="{_c(y1)}" r="5" fill="{color}" stroke="black">'
                f"<title>{fp.kind} at ({', '.join(f'{v:.4g}' for v in fp.location)})</title></circle>"
            )
        out.append("</g>")
    ly = height - 18
    x = margin
    for kind, color in CLASS_COLORS.items():
        out.append(f'<circle cx="{x}" cy="{ly - 4}" r="4" fill="{color}" stroke="black"/>')
        out.append(f'<text x="{x + 8}" y="{ly}">{kind}</text>')
        x += 12 + 7 * len(kind)
    out.append("</svg>")
    return "\n".join(out) + "\n"
