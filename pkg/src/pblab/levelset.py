"""Level-set extraction and crossing counts; the coarea identity check.

For smooth f, g on a surface with area form, the bracket mass over a window
in value space equals the window integral of the crossing count:

    integral over {(f,g) in Omega} of |{f,g}|  =  integral over Omega of
    K(s,t) ds dt,      K(s,t) = #(level_s(f)  intersect  level_t(g)).

Numerically both sides are approximated on a grid: the left by a masked
weighted sum, the right by midpoint quadrature of exact segment-crossing
counts between marching-squares contours.  Levels are nudged off node
values to emulate genericity (regular values are generic, so a vanishing
perturbation does not change either side).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateLevel, GridMismatch
from .surface import ScalarField, SurfaceGrid, poisson_bracket

_NUDGE_TRIES = 8
_CROSS_BAND = 1e-12


@dataclass
class Contour:
    """Sub-cell polyline approximation of one level set."""

    grid: SurfaceGrid
    level: float
    segs: np.ndarray          # (n, 4) endpoints in node-index units
    cells: np.ndarray         # (n,) owning cell ids, sorted
    owner: int = -1           # field id, when meaningful

    def __len__(self) -> int:
        return int(self.segs.shape[0])

    def segments_chart(self) -> np.ndarray:
        """Endpoints converted to chart coordinates (seam cells unwrapped)."""
        g = self.grid
        out = self.segs.copy()
        x0 = -g.radius + 0.5 * g.hx if g.topology == "sphere_cylindrical" else 0.0
        out[:, 0] = x0 + out[:, 0] * g.hx
        out[:, 2] = x0 + out[:, 2] * g.hx
        out[:, 1] *= g.hy
        out[:, 3] *= g.hy
        return out


def nudged_level(values: np.ndarray, s: float, extra: int = 0) -> float:
    """Move s off exact node values by tiny increments; genericity stand-in."""
    rng = float(values.max() - values.min())
    step = 1e-9 * (rng if rng > 0 else 1.0 + abs(s))
    for k in range(extra, extra + _NUDGE_TRIES):
        cand = s + k * step
        if not np.any(values == cand):
            return cand
    raise DegenerateLevel(f"could not nudge level {s} off node values")


def extract_level(f: ScalarField, s: float, owner: int = -1) -> Contour:
    """Marching-squares contour of {f = s} (s auto-nudged off node values)."""
    level = nudged_level(f.values, float(s))
    segs, cells = _kernels.marching_segments(
        f.values, level, f.grid.wrap_x, f.grid.wrap_y
    )
    return Contour(grid=f.grid, level=level, segs=segs, cells=cells, owner=owner)


def count_intersections(f: ScalarField, s: float, g: ScalarField, t: float) -> int:
    """Exact crossing count #(f^{-1}(s) ∩ g^{-1}(t)) of the two contours.

    The pair (s, t) is re-nudged until the segment configuration is
    generic at the 1e-12 orientation tolerance.
    """
    if f.grid != g.grid:
        raise GridMismatch("fields live on different grids")
    for k in range(_NUDGE_TRIES):
        cf = extract_level(f, nudged_level(f.values, float(s), extra=k))
        cg = extract_level(g, nudged_level(g.values, float(t), extra=2 * k))
        n, ndegen = _kernels.count_crossings(cf.segs, cf.cells, cg.segs, cg.cells,
                                             band=_CROSS_BAND)
        if ndegen == 0:
            return int(n)
    raise DegenerateLevel(f"no generic nudge of levels ({s}, {t}) found")


@dataclass
class CoareaReport:
    lhs: float                      # bracket mass over the value window
    rhs: float                      # quadrature of crossing counts
    rel_err: float
    quad: int
    rects: list = field(default_factory=list)
    crossing_counts_even: bool = True


def coarea_check(f: ScalarField, g: ScalarField, rects, quad: int = 64) -> CoareaReport:
    """Both sides of the level-counting identity over a union of rectangles.

    ``rects`` is a list of (s_lo, s_hi, t_lo, t_hi) windows in value space.
    The left side masks nodes whose (f, g) value lies in the (open) union;
    the right side uses quad x quad midpoint samples of the crossing count
    per rectangle.  Zero-measure rectangles contribute zero.
    """
    if f.grid != g.grid:
        raise GridMismatch("fields live on different grids")
    grid = f.grid
    bracket = np.abs(poisson_bracket(f, g).values)

    inside = np.zeros(grid.shape, bool)
    for s1, s2, t1, t2 in rects:
        if s2 <= s1 or t2 <= t1:
            continue
        inside |= (f.values > s1) & (f.values < s2) & (g.values > t1) & (g.values < t2)
    lhs = float(np.sum(bracket[inside]) * grid.cell_area)

    rhs = 0.0
    all_even = True
    for s1, s2, t1, t2 in rects:
        if s2 <= s1 or t2 <= t1:
            continue
        ds = (s2 - s1) / quad
        dt = (t2 - t1) / quad
        s_vals = s1 + (np.arange(quad) + 0.5) * ds
        t_vals = t1 + (np.arange(quad) + 0.5) * dt
        f_contours = [extract_level(f, s) for s in s_vals]
        g_contours = [extract_level(g, t) for t in t_vals]
        total = 0
        for cf in f_contours:
            for b, cg in enumerate(g_contours):
                n, ndegen = _kernels.count_crossings(
                    cf.segs, cf.cells, cg.segs, cg.cells, band=_CROSS_BAND
                )
                if ndegen > 0:
                    # re-nudge just this sample
                    n = count_intersections(f, cf.level, g, float(t_vals[b]))
                if n % 2 != 0:
                    all_even = False
                total += n
        rhs += total * ds * dt
    rel = abs(lhs - rhs) / max(lhs, rhs, 1e-300)
    return CoareaReport(lhs=lhs, rhs=rhs, rel_err=rel, quad=quad,
                        rects=[tuple(r) for r in rects],
                        crossing_counts_even=all_even)


def contours_svg(contours, path: str, stroke_colors=None, width: int = 640):
    """Write contours as plain SVG polyline segments in chart coordinates."""
    if not contours:
        raise ValueError("nothing to draw")
    g = contours[0].grid
    W = g.extent_x if g.topology == "torus" else 2 * g.radius
    H = g.extent_y * (1.0 if g.topology == "torus" else g.radius)
    scale = width / W
    height = int(round(H * scale))
    colors = stroke_colors or ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {W:.6g} {H:.6g}">',
        f'<rect width="{W:.6g}" height="{H:.6g}" fill="white"/>',
    ]
    for k, c in enumerate(contours):
        col = colors[k % len(colors)]
        segs = c.segments_chart()
        if g.topology == "sphere_cylindrical":
            segs = segs.copy()
            segs[:, 0] += g.radius          # shift z to [0, 2R]
            segs[:, [1, 3]] *= g.radius     # arc length at the equator
        d = " ".join(
            f"M{x1:.4g} {y1:.4g} L{x2:.4g} {y2:.4g}" for x1, y1, x2, y2 in segs
        )
        lines.append(
            f'<path d="{d}" stroke="{col}" stroke-width="{W/400:.4g}" fill="none"/>'
        )
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
