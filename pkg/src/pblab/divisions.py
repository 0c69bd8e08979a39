"""Curve systems on a surface: divisions, faces, crossings, threshold covers.

A division is a finite set of polyline segments (sub-cell pieces, one grid
cell each) whose complement decomposes into faces.  When every face fits
compactly in a disc of area at most A, two such systems in generic
position must cross at least area(M) / (2A) times: the maximal faces of
one side cover half the surface, there are at least area(M)/(2A) of them,
and each of their boundaries meets the other system twice.

The curve systems studied here come from cover boundaries filtered by a
permutation: the boundary of the k-th set survives only outside all
earlier sets.  A boundary point covered by L other sets survives for
exactly a 1/(L+1) fraction of permutations, which is what turns
per-permutation crossing bounds into bounds on total boundary crossings.

Faces are computed by rasterizing the curves onto a 4x supersampled grid
and flood-filling the complement; exact crossing counts use segment
arithmetic, never the raster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cover import Cover, CoverSet, enclosing_disc, mask_area
from .errors import GenericityFailure, HypothesisViolation, NotEnclosable
from .partition import PartitionOfUnity
from .surface import ScalarField, SurfaceGrid, make_sphere, make_torus

SUPERSAMPLE = 4
CROSS_BAND = 1e-12


# ---------------------------------------------------------------------------
# divisions
# ---------------------------------------------------------------------------


@dataclass
class Division:
    """Polyline curve system with lazily rasterized faces."""

    grid: SurfaceGrid
    segs: np.ndarray               # (S, 4) in node-index units, cell-local frames
    cells: np.ndarray              # (S,) owning cell ids, sorted
    A: float = math.nan            # area parameter the system was built for
    _faces: list = field(default=None, repr=False)
    _curve_mask: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(self.cells, kind="stable")
        self.segs = np.ascontiguousarray(self.segs[order], dtype=np.float64)
        self.cells = np.ascontiguousarray(self.cells[order])

    def __len__(self) -> int:
        return int(self.segs.shape[0])

    def total_length(self) -> float:
        d = self.segs
        return float(
            np.hypot((d[:, 2] - d[:, 0]) * self.grid.hx,
                     (d[:, 3] - d[:, 1]) * self.grid.hy).sum()
        )

    def fine_grid(self) -> SurfaceGrid:
        g = self.grid
        if g.topology == "torus":
            return make_torus(g.nx * SUPERSAMPLE, g.ny * SUPERSAMPLE,
                              g.extent_x, g.extent_y)
        return make_sphere(g.nx * SUPERSAMPLE, g.ny * SUPERSAMPLE, g.radius)

    def curve_mask(self) -> np.ndarray:
        if self._curve_mask is None:
            g = self.grid
            self._curve_mask = _kernels.rasterize_segments(
                self.segs, SUPERSAMPLE, g.nx * SUPERSAMPLE, g.ny * SUPERSAMPLE,
                g.wrap_x,
            ).astype(bool)
        return self._curve_mask

    def faces(self) -> list[np.ndarray]:
        """Connected components of the complement, on the supersampled grid."""
        if self._faces is None:
            g = self.grid
            labels, n = _kernels.label_components(
                ~self.curve_mask(), g.wrap_x, g.wrap_y, diagonal=False
            )
            self._faces = [labels == k for k in range(n)]
        return self._faces

    def invalidate(self):
        self._faces = None
        self._curve_mask = None


def _bilinear(values: np.ndarray, x: np.ndarray, y: np.ndarray,
              grid: SurfaceGrid) -> np.ndarray:
    """Bilinear interpolation at index-space points, wrap-aware.

    Matches the linear model marching squares uses inside each cell, so
    membership tests agree with extracted contours.
    """
    nx, ny = values.shape
    i0 = np.floor(x).astype(np.int64)
    j0 = np.floor(y).astype(np.int64)
    fx = x - i0
    fy = y - j0
    if grid.wrap_x:
        i0m, i1m = i0 % nx, (i0 + 1) % nx
    else:
        i0m = np.clip(i0, 0, nx - 1)
        i1m = np.clip(i0 + 1, 0, nx - 1)
    j0m, j1m = j0 % ny, (j0 + 1) % ny
    v00 = values[i0m, j0m]
    v10 = values[i1m, j0m]
    v01 = values[i0m, j1m]
    v11 = values[i1m, j1m]
    return ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10
            + (1 - fx) * fy * v01 + fx * fy * v11)


@dataclass
class ContouredSet:
    """A covering set that knows its defining field, level and boundary."""

    mask: np.ndarray
    level: float
    values: np.ndarray           # generating field; the set is {values > level}
    segs: np.ndarray
    cells: np.ndarray


@dataclass
class ContouredCover:
    grid: SurfaceGrid
    sets: list[ContouredSet]

    def __len__(self) -> int:
        return len(self.sets)

    def as_cover(self) -> Cover:
        return Cover([CoverSet(self.grid, s.mask, id=k)
                      for k, s in enumerate(self.sets)])


def contoured_cover_from_fields(fields: list[ScalarField], levels,
                                grid: SurfaceGrid) -> ContouredCover:
    """Superlevel sets {f > level} with their marching-squares boundaries."""
    from .levelset import extract_level

    sets = []
    for f, lev in zip(fields, levels):
        c = extract_level(f, float(lev))
        sets.append(ContouredSet(mask=f.values > c.level, level=c.level,
                                 values=f.values, segs=c.segs, cells=c.cells))
    return ContouredCover(grid=grid, sets=sets)


def _clip_outside(segs, cells, values, level, grid):
    """Keep the parts of the segments lying outside {values > level}.

    Endpoint membership comes from bilinear interpolation; segments whose
    endpoints straddle the level are split at the linear crossing point
    (sub-cell pieces, so one crossing per segment is the generic case).
    """
    if segs.shape[0] == 0:
        return segs, cells
    v1 = _bilinear(values, segs[:, 0], segs[:, 1], grid) - level
    v2 = _bilinear(values, segs[:, 2], segs[:, 3], grid) - level
    out1 = v1 <= 0.0
    out2 = v2 <= 0.0
    keep = out1 & out2
    drop = ~out1 & ~out2
    split = ~(keep | drop)
    parts = [segs[keep]]
    cell_parts = [cells[keep]]
    if split.any():
        s = segs[split]
        a = v1[split]
        b = v2[split]
        t = a / (a - b)
        mx = s[:, 0] + t * (s[:, 2] - s[:, 0])
        my = s[:, 1] + t * (s[:, 3] - s[:, 1])
        o1 = out1[split]
        sub = np.where(o1[:, None],
                       np.stack([s[:, 0], s[:, 1], mx, my], axis=1),
                       np.stack([mx, my, s[:, 2], s[:, 3]], axis=1))
        parts.append(sub)
        cell_parts.append(cells[split])
    return np.concatenate(parts, axis=0), np.concatenate(cell_parts)


def division_from_cover_order(cc: ContouredCover, alpha) -> Division:
    """The permutation-filtered boundary system of a contoured cover.

    Position k of ``alpha`` contributes the boundary of set alpha[k]
    clipped to the complement of all earlier sets.
    """
    alpha = list(alpha)
    if sorted(alpha) != list(range(len(cc.sets))):
        raise ValueError("alpha must be a permutation of the set indices")
    grid = cc.grid
    segs_out = []
    cells_out = []
    for pos, k in enumerate(alpha):
        s = cc.sets[k]
        segs, cells = s.segs, s.cells
        for prev in alpha[:pos]:
            if segs.shape[0] == 0:
                break
            ps = cc.sets[prev]
            segs, cells = _clip_outside(segs, cells, ps.values, ps.level, grid)
        if segs.shape[0]:
            segs_out.append(segs)
            cells_out.append(cells)
    if segs_out:
        segs = np.concatenate(segs_out, axis=0)
        cells = np.concatenate(cells_out)
    else:
        segs = np.empty((0, 4))
        cells = np.empty(0, np.int64)
    return Division(grid=grid, segs=segs, cells=cells)


def _dilate4(mask: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    out = mask.copy()
    out |= np.roll(mask, 1, axis=1) | np.roll(mask, -1, axis=1)
    up = np.roll(mask, 1, axis=0)
    dn = np.roll(mask, -1, axis=0)
    if not grid.wrap_x:
        up = up.copy()
        dn = dn.copy()
        up[0, :] = False
        dn[-1, :] = False
    out |= up | dn
    return out


def is_A_division(d: Division, A: float):
    """Whether every face fits compactly in a disc of area at most A.

    Compact containment is tested as: the one-cell dilation of the face
    (supersampled cells) has an enclosing disc of area <= A.  Returns
    ``(ok, certificate)``; the certificate names the violating face and
    its measured enclosing area (inf when not enclosable at all).
    """
    fg = d.fine_grid()
    for k, face in enumerate(d.faces()):
        dil = _dilate4(face, fg)
        try:
            area = mask_area(enclosing_disc(dil, fg), fg)
        except NotEnclosable:
            return False, {"face": k, "enclosing_area": math.inf,
                           "face_area": mask_area(face, fg)}
        if area > A:
            return False, {"face": k, "enclosing_area": area,
                           "face_area": mask_area(face, fg)}
    return True, None


def trim_to_disc_faces(d: Division) -> Division:
    """Remove curve parts interior to enclosing discs of the faces.

    Afterwards every face is an open disc; the division predicate is
    preserved (the enclosing disc of a face compactly contained in an
    area-A disc is still contained in it) and the curve set only shrinks.
    """
    fg = d.fine_grid()
    keep = np.ones(len(d), bool)
    mx = 0.5 * (d.segs[:, 0] + d.segs[:, 2]) * SUPERSAMPLE
    my = 0.5 * (d.segs[:, 1] + d.segs[:, 3]) * SUPERSAMPLE
    ii = np.floor(mx).astype(np.int64)
    jj = np.floor(my).astype(np.int64)
    if d.grid.wrap_x:
        ii %= fg.nx
    else:
        ii = np.clip(ii, 0, fg.nx - 1)
    jj %= fg.ny
    curve = d.curve_mask()
    for k, face in enumerate(d.faces()):
        try:
            disc = enclosing_disc(face, fg)
        except NotEnclosable as exc:
            raise HypothesisViolation(
                f"face {k} is not enclosable; not an A-division"
            ) from exc
        interior = disc & curve
        if interior.any():
            keep &= ~interior[ii, jj]
    out = Division(grid=d.grid, segs=d.segs[keep], cells=d.cells[keep], A=d.A)
    return out


def count_division_intersections(d1: Division, d2: Division) -> int:
    """Exact crossing count between two curve systems.

    Raises GenericityFailure on tangencies, shared vertices or overlapping
    segments at the orientation tolerance (identical systems always fail).
    """
    n, ndegen = _kernels.count_crossings(d1.segs, d1.cells, d2.segs, d2.cells,
                                         band=CROSS_BAND)
    if ndegen > 0:
        raise GenericityFailure(
            f"{ndegen} degenerate segment pairs; nudge the construction"
        )
    return int(n)


def maximal_faces(d1: Division, d2: Division, slack_cells: int = 4):
    """Faces of each division not properly contained in a face of the other.

    Containment is read off the rasterized face labellings: P sits inside
    the closure of Q when P's cells avoid every other face of the second
    system (up to ``slack_cells`` raster noise).  Proper containment
    additionally requires the reverse containment to fail.  Returns
    (maximal faces of d1, maximal faces of d2) as supersampled masks.
    """
    lab1, n1 = _kernels.label_components(~d1.curve_mask(), d1.grid.wrap_x,
                                         d1.grid.wrap_y, diagonal=False)
    lab2, n2 = _kernels.label_components(~d2.curve_mask(), d2.grid.wrap_x,
                                         d2.grid.wrap_y, diagonal=False)
    combo = (lab1.ravel() + 1) * (n2 + 1) + (lab2.ravel() + 1)
    M = np.bincount(combo, minlength=(n1 + 1) * (n2 + 1)).reshape(n1 + 1, n2 + 1)
    # row/col 0 hold curve cells of the respective system
    in_faces_1 = M[1:, :]      # (n1, n2+1)
    in_faces_2 = M[:, 1:]      # (n1+1, n2)

    def containments(rows):
        # rows[a] = cell histogram of face a against the other labelling
        # (column 0 = other system's curve cells)
        best = rows[:, 1:].argmax(axis=1)
        mass = rows[:, 1:].sum(axis=1)
        inside = rows[np.arange(rows.shape[0]), best + 1]
        return best, (mass - inside) <= slack_cells

    host1, cont1 = containments(in_faces_1)             # face a of d1 vs d2
    host2, cont2 = containments(in_faces_2.T)           # face b of d2 vs d1
    maximal1 = []
    for a in range(n1):
        proper = cont1[a] and not (
            cont2[host1[a]] and host2[host1[a]] == a
        )
        if not proper:
            maximal1.append(lab1 == a)
    maximal2 = []
    for b in range(n2):
        proper = cont2[b] and not (
            cont1[host2[b]] and host1[host2[b]] == b
        )
        if not proper:
            maximal2.append(lab2 == b)
    return maximal1, maximal2


def face_boundary_segments(d: Division, face: np.ndarray):
    """Segments of the division bounding a given (supersampled) face.

    A segment bounds the face when one of its two side probes (small
    normal offsets from the midpoint) lands in the face.
    """
    fg_nx = d.grid.nx * SUPERSAMPLE
    fg_ny = d.grid.ny * SUPERSAMPLE
    mx = 0.5 * (d.segs[:, 0] + d.segs[:, 2]) * SUPERSAMPLE
    my = 0.5 * (d.segs[:, 1] + d.segs[:, 3]) * SUPERSAMPLE
    tx = (d.segs[:, 2] - d.segs[:, 0]) * SUPERSAMPLE
    ty = (d.segs[:, 3] - d.segs[:, 1]) * SUPERSAMPLE
    ln = np.hypot(tx, ty)
    ln[ln == 0] = 1.0
    nxv = -ty / ln
    nyv = tx / ln
    hits = np.zeros(len(d), bool)
    for sgn in (+1.5, -1.5):
        px = mx + sgn * nxv
        py = my + sgn * nyv
        ii = np.floor(px).astype(np.int64)
        jj = np.floor(py).astype(np.int64)
        if d.grid.wrap_x:
            ii %= fg_nx
        else:
            ii = np.clip(ii, 0, fg_nx - 1)
        jj %= fg_ny
        hits |= face[ii, jj]
    return d.segs[hits], d.cells[hits]


# ---------------------------------------------------------------------------
# threshold-sampled covers
# ---------------------------------------------------------------------------


def threshold_covers(F: PartitionOfUnity, L: int, seed: int = 0) -> Cover:
    """Cover by superlevel sets {f_i > s} at jittered thresholds.

    For each field the thresholds live one per interval [(k-1)/L, k/L];
    every node is then covered at least L - |I| times (each field
    contributes at least L f_i(x) - 1 sets), which is asserted.
    """
    n = len(F.fields)
    if L <= n:
        raise ValueError(f"need L > |I| = {n}, got L = {L}")
    rng = np.random.default_rng(seed)
    grid = F.grid
    sets = []
    for f in F.fields:
        m_i = int(math.floor(L * float(f.values.max()))) + 1
        for k in range(1, m_i + 1):
            s = (k - 1 + rng.random()) / L
            mask = f.values > s
            if mask.any():
                sets.append(CoverSet(grid, mask, id=len(sets)))
    c = Cover(sets)
    mult = c.multiplicity()
    assert int(mult.min()) >= L - n, "threshold multiplicity bound violated"
    return c


def contoured_threshold_cover(F: PartitionOfUnity, L: int, seed: int = 0) -> ContouredCover:
    """Like ``threshold_covers`` but keeping fields/levels/boundaries."""
    from .levelset import extract_level

    n = len(F.fields)
    if L <= n:
        raise ValueError(f"need L > |I| = {n}, got L = {L}")
    rng = np.random.default_rng(seed)
    sets = []
    for f in F.fields:
        m_i = int(math.floor(L * float(f.values.max()))) + 1
        for k in range(1, m_i + 1):
            s = (k - 1 + rng.random()) / L
            if s >= float(f.values.max()):
                continue
            c = extract_level(f, s)
            sets.append(ContouredSet(mask=f.values > c.level, level=c.level,
                                     values=f.values, segs=c.segs, cells=c.cells))
    return ContouredCover(grid=F.grid, sets=sets)


# ---------------------------------------------------------------------------
# permutation experiments
# ---------------------------------------------------------------------------


def _outer_boundary(mask: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    return _dilate4(mask, grid) & ~mask


@dataclass
class PermutationReport:
    survival_freq: float        # empirical boundary-point survival rate
    survival_expected: float    # mean over events of 1/(multiplicity+1)
    survival_sigma: float       # std error over permutation samples
    n_events: int
    n_permutations: int
    mean_crossings: float       # nan when no crossing pass ran/succeeded
    implied_union_bound: float  # (L+1)^2 * mean crossings
    genericity_failures: int
    crossing_samples: int


def permutation_average_experiment(cU, cV, L: int, samples: int = 200,
                                   seed: int = 0, points_per_set: int = 32,
                                   crossing_samples: int = 0) -> PermutationReport:
    """Monte-Carlo check of the permutation survival rate and, optionally,
    of the averaged crossing bound.

    Survival: for sampled outer-boundary points x of each set i, the
    boundary survives a permutation when i precedes every set containing
    x; with multiplicity L everywhere this happens with probability
    exactly 1/(L+1).  Crossings: for sampled permutation pairs on two
    contoured covers, the mean crossing count of the filtered systems and
    the implied bound (L+1)^2 * mean on total boundary crossings.
    """
    rng = np.random.default_rng(seed)
    cover_u = cU.as_cover() if isinstance(cU, ContouredCover) else cU
    grid = cover_u.grid
    masks = [s.mask for s in cover_u.sets]
    n = len(masks)

    events = []  # (owner, container index list)
    for i, m in enumerate(masks):
        pts = np.flatnonzero(_outer_boundary(m, grid).ravel())
        if pts.size == 0:
            continue
        stride = max(1, pts.size // points_per_set)
        for p in pts[::stride][:points_per_set]:
            containers = [k for k in range(n)
                          if k != i and masks[k].ravel()[p]]
            events.append((i, containers))
    if not events:
        raise HypothesisViolation("no boundary points to sample")
    expected = float(np.mean([1.0 / (len(c) + 1.0) for _, c in events]))

    freqs = np.empty(samples)
    for t in range(samples):
        perm = rng.permutation(n)
        pos = np.empty(n, np.int64)
        pos[perm] = np.arange(n)
        hit = 0
        for i, containers in events:
            pi = pos[i]
            ok = True
            for k in containers:
                if pos[k] < pi:
                    ok = False
                    break
            hit += ok
        freqs[t] = hit / len(events)
    survival = float(freqs.mean())
    sigma = float(freqs.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf

    mean_cross = math.nan
    implied = math.nan
    failures = 0
    done = 0
    if crossing_samples > 0:
        if not (isinstance(cU, ContouredCover) and isinstance(cV, ContouredCover)):
            raise ValueError("crossing sampling needs contoured covers")
        counts = []
        for _ in range(crossing_samples):
            alpha = rng.permutation(len(cU.sets))
            beta = rng.permutation(len(cV.sets))
            ga = division_from_cover_order(cU, alpha)
            gb = division_from_cover_order(cV, beta)
            try:
                counts.append(count_division_intersections(ga, gb))
            except GenericityFailure:
                failures += 1
        done = len(counts)
        if counts:
            mean_cross = float(np.mean(counts))
            implied = (L + 1.0) ** 2 * mean_cross
    return PermutationReport(
        survival_freq=survival,
        survival_expected=expected,
        survival_sigma=sigma,
        n_events=len(events),
        n_permutations=samples,
        mean_crossings=mean_cross,
        implied_union_bound=implied,
        genericity_failures=failures,
        crossing_samples=done,
    )


# ---------------------------------------------------------------------------
# random disc-cover divisions (seeded generators for experiments)
# ---------------------------------------------------------------------------


def random_disc_division(grid: SurfaceGrid, A: float, seed: int,
                         lattice: int | None = None,
                         margin: float = 0.85) -> Division:
    """A seeded random curve system that is an A-division by construction.

    A jittered lattice of radial-bump superlevel discs covers the torus,
    each disc of area at most margin * A; the boundary system filtered by
    a random permutation then has every face compactly inside one of the
    discs' enclosing discs, of area at most A.  Covering is asserted.
    """
    if grid.topology != "torus":
        raise ValueError("the generator is built for the torus")
    Lx, Ly = grid.extent_x, grid.extent_y
    r_max = math.sqrt(margin * A / math.pi) * 0.98
    if lattice is None:
        lattice = max(2, math.ceil(1.18 * Lx * math.sqrt(0.5) / r_max))
    rng = np.random.default_rng(seed)
    spacing = 1.0 / lattice
    jitter = 0.09 * spacing
    need = math.sqrt(0.5) * spacing * Lx + jitter * math.sqrt(2.0) * Lx
    r_lo = need * 1.04
    if r_lo > r_max * 0.99:
        raise ValueError("A too small for a covering disc lattice at this spacing")
    X, Y = grid.coords()
    fields = []
    levels = []
    r0 = r_max * 1.35  # profile support; level picks the effective radius
    for a in range(lattice):
        for b in range(lattice):
            cx = (a + 0.5) * spacing * Lx + rng.uniform(-jitter, jitter) * Lx
            cy = (b + 0.5) * spacing * Ly + rng.uniform(-jitter, jitter) * Ly
            du = _wrap_delta(X, cx, Lx)
            dv = _wrap_delta(Y, cy, Ly)
            phi = 1.0 - (du * du + dv * dv) / (r0 * r0)
            fields.append(ScalarField(grid, phi))
            r_eff = rng.uniform(r_lo, r_max)
            levels.append(1.0 - (r_eff / r0) ** 2)
    cc = contoured_cover_from_fields(fields, levels, grid)
    union = np.zeros(grid.shape, bool)
    for s in cc.sets:
        union |= s.mask
    assert union.all(), "random disc lattice failed to cover"
    alpha = rng.permutation(len(cc.sets))
    d = division_from_cover_order(cc, alpha)
    d.A = A
    return d


def _wrap_delta(coord, center, period):
    d = coord - center
    return d - period * np.round(d / period)


def polyline_to_cell_segments(points: np.ndarray, grid: SurfaceGrid):
    """Chop a polyline (index units) into per-cell segments.

    Needed to build divisions from analytic curves: crossing counting
    buckets segments by grid cell, so every piece must stay in one cell.
    Returns (segs, cells); the polyline may wander outside [0, n) and is
    wrapped cell-by-cell.
    """
    segs = []
    cells = []
    nx, ny = grid.nx, grid.ny
    ncx = nx if grid.wrap_x else nx - 1
    for k in range(points.shape[0] - 1):
        x1, y1 = points[k]
        x2, y2 = points[k + 1]
        # split parameters at integer grid lines in both axes
        ts = [0.0, 1.0]
        for lo, hi in ((x1, x2), (y1, y2)):
            if hi != lo:
                a, b = sorted((lo, hi))
                for m in range(math.floor(a) + 1, math.ceil(b)):
                    ts.append((m - lo) / (hi - lo))
        ts = sorted(t for t in ts if 0.0 <= t <= 1.0)
        for t0, t1 in zip(ts, ts[1:]):
            if t1 - t0 < 1e-12:
                continue
            ax, ay = x1 + t0 * (x2 - x1), y1 + t0 * (y2 - y1)
            bx, by = x1 + t1 * (x2 - x1), y1 + t1 * (y2 - y1)
            mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
            ci = math.floor(mx)
            cj = math.floor(my)
            # normalize into the cell-local frame used by marching squares
            si = (ci % ncx) - ci if grid.wrap_x else 0
            sj = (cj % ny) - cj
            segs.append((ax + si, ay + sj, bx + si, by + sj))
            cells.append((ci + si) * ny + (cj + sj))
    return np.array(segs, dtype=np.float64), np.array(cells, dtype=np.int64)
