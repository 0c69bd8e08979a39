"""Partitions of unity subordinate to covers.

Three constructions matter here:

* ``bump_partition`` — mollified distance bumps per covering set,
  normalized by their sum; works on any cover whose sets are deep enough
  (every node must be interior to some set at the requested margin).
* ``sharp_cover`` — the lattice construction on the torus realizing the
  optimal localization scaling: translated discs V(eps, tau) of area
  comparable to eps^2, every one essential, carrying the eps-scaled
  profile h((z - eps*tau)/eps) normalized by G = sum of translates.
  Bracket magnitudes of the resulting partition scale like 1/eps^2.
* ``relax_to_nonnegative`` — the even C^1 clip rho with rho(t)=0 near 0,
  rho(t) >= |t| - 2*delta and rho' <= 1, which turns families with
  sum |f_i| >= 1 into honest nonnegative families at the cost of the
  factor (1 - 2*N*delta)^{-1}, without increasing brackets pointwise
  (chain rule, |rho'| <= 1).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .cover import Cover, CoverSet, essential_indices
from .errors import (
    DeltaTooLarge,
    GridMismatch,
    HypothesisViolation,
    InvalidGrid,
    UncoveredInterior,
    UnderResolved,
)
from .surface import ScalarField, SurfaceGrid, load_field, save_field

NONNEG_TOL = 1e-12
SUM_TOL = 1e-9
SUPPORT_TOL = 1e-12

# sharp lattice profile radii, in lattice units: the open profile support
# (radius > 1/sqrt(2), so integer translates cover the plane) sits inside
# the disc V (radius < 1, so every translate of V keeps a private centre)
PROFILE_RADIUS = 0.85
DISC_RADIUS = 0.95


class InvalidPartition(HypothesisViolation):
    """A partition-of-unity invariant failed at construction."""


@dataclass
class PartitionOfUnity:
    """Nonnegative fields summing to one, each supported in its cover set."""

    fields: list[ScalarField]
    cover: Cover
    subordination: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.subordination:
            self.subordination = list(range(len(self.fields)))
        if len(self.subordination) != len(self.fields):
            raise InvalidPartition("subordination length mismatch")
        grid = self.cover.grid
        total = np.zeros(grid.shape)
        for k, f in enumerate(self.fields):
            if f.grid != grid:
                raise GridMismatch(f"field {k} lives on a different grid")
            if float(f.values.min()) < -NONNEG_TOL:
                raise InvalidPartition(f"field {k} dips below -{NONNEG_TOL}")
            mask = self.cover.sets[self.subordination[k]].mask
            outside = np.abs(f.values) > SUPPORT_TOL
            if bool((outside & ~mask).any()):
                raise InvalidPartition(f"field {k} leaks outside its cover set")
            total += f.values
        if float(np.abs(total - 1.0).max()) > SUM_TOL:
            raise InvalidPartition("fields do not sum to 1 within 1e-9")

    @property
    def grid(self) -> SurfaceGrid:
        return self.cover.grid

    def __len__(self) -> int:
        return len(self.fields)


def superlevel_set(f: ScalarField, t: float) -> np.ndarray:
    """Strict superlevel node mask {f > t} for t in (0, 1)."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    return f.values > t


# ---------------------------------------------------------------------------
# distance bumps
# ---------------------------------------------------------------------------


def _interior_distance(mask: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    """Chart-distance from inside nodes to the mask boundary, wrap-aware.

    The sphere chart uses the equatorial theta scale; this is only a
    modulus for bump profiles, no theorem depends on the metric.
    """
    if mask.all():
        return np.full(grid.shape, np.inf)
    sampling = (grid.hx, grid.hy * (grid.radius or 1.0))
    tx = 3 if grid.wrap_x else 1
    big = np.tile(mask, (tx, 3))
    dist = ndimage.distance_transform_edt(big, sampling=sampling)
    x0 = grid.nx if grid.wrap_x else 0
    return dist[x0 : x0 + grid.nx, grid.ny : 2 * grid.ny]


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def bump_partition(c: Cover, margin: float = 0.2) -> PartitionOfUnity:
    """Normalized distance bumps subordinate to the cover.

    Each set gets the C^1 ramp of its boundary distance, saturating at
    margin * diameter (diameter measured as twice the inradius).  Every
    node must sit in the saturated region of some set, so the denominator
    G stays >= 1; otherwise UncoveredInterior is raised.
    """
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin must lie in (0,1), got {margin}")
    grid = c.grid
    bumps = []
    saturated = np.zeros(grid.shape, bool)
    for s in c.sets:
        dist = _interior_distance(s.mask, grid)
        inradius = float(dist[s.mask].max())
        depth = margin * 2.0 * inradius
        if depth == 0.0 or not np.isfinite(depth):
            g = s.mask.astype(np.float64)  # the whole surface: constant bump
            saturated |= s.mask
        else:
            g = _smoothstep(dist / depth)
            g[~s.mask] = 0.0
            saturated |= dist >= depth
        bumps.append(g)
    if not saturated.all():
        n_bad = int(np.count_nonzero(~saturated))
        raise UncoveredInterior(
            f"{n_bad} nodes are within {margin} * diameter of every covering boundary"
        )
    G = np.sum(bumps, axis=0)
    if float(G.min()) <= 0.5:  # saturated nodes force G >= 1; this is a guard
        raise UncoveredInterior("bump denominator lost positivity")
    fields = [ScalarField(grid, g / G) for g in bumps]
    return PartitionOfUnity(fields=fields, cover=c)


# ---------------------------------------------------------------------------
# the sharp lattice construction on the torus
# ---------------------------------------------------------------------------


def _wrapped_offset(coord: np.ndarray, center: float, period: float) -> np.ndarray:
    d = coord - center
    return d - period * np.round(d / period)


def sharp_cover(eps: float, grid: SurfaceGrid, offset: tuple[float, float] = (0.0, 0.0)):
    """Cover of the torus by (1/eps)^2 translated discs plus its partition.

    Returns ``(cover, partition)``.  Disc tau has centre eps*(tau+offset)
    in period units, radius DISC_RADIUS*eps; the bump profile
    (1 - r^2/rho^2)^3 with rho = PROFILE_RADIUS*eps covers the torus by
    construction, every disc keeps its centre private, so the whole index
    set is essential.  Gradients scale like 1/eps, brackets like 1/eps^2.
    """
    if grid.topology != "torus":
        raise InvalidGrid("sharp covers are built on the torus")
    K = round(1.0 / eps)
    if abs(K * eps - 1.0) > 1e-9:
        raise ValueError(f"1/eps must be an integer, got eps={eps}")
    if grid.nx < 8 * K or grid.ny < 8 * K:
        raise UnderResolved(
            f"need at least {8 * K} nodes per axis for eps=1/{K}, "
            f"got {grid.nx} x {grid.ny}"
        )
    X, Y = grid.coords()
    ax, ay = grid.extent_x * eps, grid.extent_y * eps  # lattice cell sides
    rp2 = PROFILE_RADIUS**2
    rv2 = DISC_RADIUS**2
    bumps = []
    masks = []
    for a in range(K):
        cx = (a + offset[0]) * ax
        du = _wrapped_offset(X, cx, grid.extent_x) / ax
        du2 = du * du
        for b in range(K):
            cy = (b + offset[1]) * ay
            dv = _wrapped_offset(Y, cy, grid.extent_y) / ay
            r2 = du2 + dv * dv
            bump = np.maximum(0.0, 1.0 - r2 / rp2) ** 3
            bumps.append(bump)
            masks.append(r2 < rv2)
    G = np.sum(bumps, axis=0)
    if float(G.min()) <= 0.0:
        raise UnderResolved("profile translates fail to cover at this resolution")
    sets = [CoverSet(grid, m, id=k) for k, m in enumerate(masks)]
    c = Cover(sets)
    fields = [ScalarField(grid, g / G) for g in bumps]
    part = PartitionOfUnity(fields=fields, cover=c)
    if len(essential_indices(c)) != K * K:
        raise UnderResolved("lattice discs lost their private centres")
    return c, part


def duplicate(p: PartitionOfUnity, m: int) -> PartitionOfUnity:
    """m copies of every covering set, with fields f_i / m on each copy.

    The duplicated cover has degree m * degree and the duplicated
    partition's pairwise brackets scale by exactly 1 / m^2.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    grid = p.grid
    sets = []
    fields = []
    sub = []
    for k, s in enumerate(p.cover.sets):
        for c in range(m):
            sets.append(CoverSet(grid, s.mask.copy(), id=len(sets)))
            fields.append(ScalarField(grid, p.fields[k].values / m))
            sub.append(len(sets) - 1)
    return PartitionOfUnity(fields=fields, cover=Cover(sets), subordination=sub)


# ---------------------------------------------------------------------------
# nonnegative relaxation
# ---------------------------------------------------------------------------


def rho(t: np.ndarray, delta: float) -> np.ndarray:
    """Even C^1 clip: 0 near 0, >= |t| - 2*delta everywhere, slope <= 1.

    Identically 0 for |t| <= 1.5*delta, quadratic ramp, and exactly
    |t| - 2*delta for |t| >= 2.5*delta.
    """
    b = 0.5 * delta
    u = np.abs(t) - (2.0 * delta - b)
    return np.where(
        u <= 0.0, 0.0, np.where(u >= 2.0 * b, np.abs(t) - 2.0 * delta, u * u / (4.0 * b))
    )


def rho_prime(t: np.ndarray, delta: float) -> np.ndarray:
    b = 0.5 * delta
    u = np.abs(t) - (2.0 * delta - b)
    mag = np.where(u <= 0.0, 0.0, np.where(u >= 2.0 * b, 1.0, u / (2.0 * b)))
    return np.sign(t) * mag


def relax_to_nonnegative(fields: list[ScalarField], delta: float) -> list[ScalarField]:
    """Rescaled clips (1 - 2*N*delta)^{-1} * rho(f_i), nonnegative, sum >= 1.

    Requires sum_i |f_i| >= 1 pointwise and 2*N*delta < 1.  Pointwise the
    clip never increases bracket magnitudes before rescaling (chain rule
    with |rho'| <= 1); see ``relaxed_bracket_factor``.
    """
    n = len(fields)
    if n == 0:
        raise ValueError("no fields to relax")
    if 2.0 * n * delta >= 1.0:
        raise DeltaTooLarge(f"need 2*N*delta < 1, got N={n}, delta={delta}")
    grid = fields[0].grid
    total_abs = np.zeros(grid.shape)
    for f in fields:
        if f.grid != grid:
            raise GridMismatch("fields live on different grids")
        total_abs += np.abs(f.values)
    if float(total_abs.min()) < 1.0 - 1e-9:
        raise HypothesisViolation("sum of |f_i| dips below 1")
    scale = 1.0 / (1.0 - 2.0 * n * delta)
    return [ScalarField(grid, scale * rho(f.values, delta)) for f in fields]


def relaxed_bracket_factor(f: ScalarField, delta: float) -> np.ndarray:
    """Pointwise chain-rule factor rho'(f): the bracket of the clipped
    fields is rho'(f) * rho'(g) * {f, g}, so its magnitude never exceeds
    |{f, g}| (before the (1 - 2*N*delta)^{-1} rescale)."""
    return rho_prime(f.values, delta)


# ---------------------------------------------------------------------------
# partition optimization
# ---------------------------------------------------------------------------


@dataclass
class OptimizeResult:
    partition: PartitionOfUnity
    objective: float
    trace: list[tuple[int, float]]   # (step, best-so-far objective)
    objective_name: str


def _d_adj(arr, grid, axis):
    """Adjoint of the central-difference operator (periodic axes)."""
    h = grid.hx if axis == 0 else grid.hy
    return -(np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) * (0.5 / h)


class _BracketWork:
    """Derivatives and overlap bookkeeping for one optimizer iterate."""

    def __init__(self, fvals, grid, pairs):
        from .surface import chart_derivatives

        self.grid = grid
        self.inv_dens = 1.0 / grid.density
        self.pairs = pairs  # unordered overlapping (i, j), i < j
        self.dx = []
        self.dy = []
        for v in fvals:
            a, b = chart_derivatives(v, grid)
            self.dx.append(a)
            self.dy.append(b)

    def pair_bracket(self, i, j):
        return (self.dx[i] * self.dy[j] - self.dy[i] * self.dx[j]) * self.inv_dens

    def sum_abs(self):
        out = np.zeros(self.grid.shape)
        for i, j in self.pairs:
            out += 2.0 * np.abs(self.pair_bracket(i, j))
        return out


def _pb_value_witness(fvals, grid):
    """Exact hypercube max over nodes with its (node, x, y) witness.

    Scans nodes in decreasing order of sum |B_ij|(p), which upper-bounds
    the local cube max, so the scan prunes early.
    """
    from . import _slots

    n = len(fvals)
    counts, idx, dxs, dys = _slots.build_node_slots(fvals, grid)
    inv_dens = 1.0 / grid.density
    sum_node = np.zeros(grid.n_nodes)
    act = np.nonzero(counts > 1)[0]
    for p in act:
        B, _, _ = _slots.local_bracket_matrix(p, counts, idx, dxs, dys,
                                              inv_dens=inv_dens)
        sum_node[p] = np.abs(B).sum()
    order = np.argsort(-sum_node, kind="stable")
    best = 0.0
    witness = None
    for p in order:
        if sum_node[p] <= best or sum_node[p] == 0.0:
            break
        B, rows, cols = _slots.local_bracket_matrix(p, counts, idx, dxs, dys,
                                                    inv_dens=inv_dens)
        v, xl, yl = _slots.cube_max_small(B)
        if v > best:
            best = v
            x = np.zeros(n)
            y = np.zeros(n)
            x[rows] = xl
            y[cols] = yl
            witness = (int(p), x, y)
    return best, witness


def _objective_with_gradient(fvals, grid, pairs, kind, want_grad=True):
    """Objective value and its subgradient with respect to the fields.

    All three objectives have the form J = sum_ij <w_ij, {f_i, f_j}> for
    suitable (sub)gradient weights w_ij; the gradient flows through the
    bracket by the adjoint of the central-difference operator.
    """
    n = len(fvals)
    work = _BracketWork(fvals, grid, pairs)
    grad = [np.zeros(grid.shape) for _ in range(n)] if want_grad else None

    def add_pair_grad(i, j, wij):
        # d<w, {f_i, f_j}>/df_i and /df_j via the adjoint
        a = wij * work.dy[j] * work.inv_dens
        b = wij * work.dx[j] * work.inv_dens
        grad[i] += _d_adj(a, grid, 0) - _d_adj(b, grid, 1)
        a = wij * work.dy[i] * work.inv_dens
        b = wij * work.dx[i] * work.inv_dens
        grad[j] += -_d_adj(a, grid, 0) + _d_adj(b, grid, 1)

    if kind == "l1sum":
        value = 0.0
        for i, j in pairs:
            bij = work.pair_bracket(i, j)
            value += 2.0 * float(np.abs(bij).sum()) * grid.cell_area
            if want_grad:
                add_pair_grad(i, j, 2.0 * np.sign(bij) * grid.cell_area)
        return value, grad
    if kind == "supsum":
        s = work.sum_abs()
        pflat = int(np.argmax(s))
        value = float(s.ravel()[pflat])
        if want_grad and value > 0:
            point = np.zeros(grid.shape)
            point.ravel()[pflat] = 1.0
            for i, j in pairs:
                bp = float(work.pair_bracket(i, j).ravel()[pflat])
                if bp != 0.0:
                    add_pair_grad(i, j, 2.0 * np.sign(bp) * point)
        return value, grad
    if kind == "pb_upper":
        value, witness = _pb_value_witness(fvals, grid)
        if want_grad and witness is not None:
            pflat, x, y = witness
            point = np.zeros(grid.shape)
            point.ravel()[pflat] = 1.0
            for i, j in pairs:
                wgt = x[i] * y[j] - x[j] * y[i]  # both ordered copies
                if wgt != 0.0:
                    add_pair_grad(i, j, wgt * point)
        return value, grad
    raise ValueError(f"unknown objective {kind!r}")


def optimize_partition(c: Cover, objective: str = "supsum", steps: int = 200,
                       seed: int = 0, margin: float = 0.2,
                       step_size: float = 0.5) -> OptimizeResult:
    """Projected gradient descent over masked logit fields.

    Fields are parameterized as f_i = m_i exp(l_i) / sum_k m_k exp(l_k)
    (m_i the cover masks), which keeps subordination and normalization
    exact at every iterate.  Gradients flow through the bracket operator
    by its adjoint; sup-type objectives use the subgradient at the argmax
    witness.  The best iterate seen is returned; the reported objective
    is non-increasing by construction, and the run is seed-deterministic.
    """
    grid = c.grid
    init = bump_partition(c, margin=margin)
    rng = np.random.default_rng(seed)
    floor = 1e-4
    n = len(c.sets)
    logits = []
    for k, s in enumerate(c.sets):
        l = np.where(s.mask, np.log(init.fields[k].values + floor), 0.0)
        l += 1e-3 * rng.standard_normal(grid.shape)
        logits.append(l)
    pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if bool((c.sets[i].mask & c.sets[j].mask).any())
    ]

    def fields_from_logits():
        gs = [np.where(s.mask, np.exp(l), 0.0) for l, s in zip(logits, c.sets)]
        G = np.sum(gs, axis=0)
        return [g / G for g in gs]

    best_val = math.inf
    best_fields = None
    trace = []
    for it in range(steps + 1):
        fvals = fields_from_logits()
        last = it == steps
        value, grad_f = _objective_with_gradient(fvals, grid, pairs, objective,
                                                 want_grad=not last)
        if value < best_val:
            best_val = value
            best_fields = [f.copy() for f in fvals]
        trace.append((it, best_val))
        if last or best_val == 0.0:
            break
        inner = np.zeros(grid.shape)
        for i in range(n):
            inner += fvals[i] * grad_f[i]
        gmax = 0.0
        grad_l = []
        for i in range(n):
            gl = fvals[i] * (grad_f[i] - inner)
            gl[~c.sets[i].mask] = 0.0
            grad_l.append(gl)
            gmax = max(gmax, float(np.abs(gl).max()))
        if gmax == 0.0:
            break
        eta = step_size / gmax
        for i in range(n):
            logits[i] -= eta * grad_l[i]

    part = PartitionOfUnity(
        fields=[ScalarField(grid, f) for f in best_fields], cover=c
    )
    return OptimizeResult(partition=part, objective=best_val, trace=trace,
                          objective_name=objective)


def save_optimizer_trace(result: OptimizeResult, path: str):
    with open(path, "w") as fh:
        fh.write("step,objective\n")
        for step, val in result.trace:
            fh.write(f"{step},{val:.17g}\n")


# ---------------------------------------------------------------------------
# serialization: a directory of field files plus a cover reference
# ---------------------------------------------------------------------------


def save_partition(p: PartitionOfUnity, directory: str):
    from .cover import save_cover

    os.makedirs(directory, exist_ok=True)
    save_cover(p.cover, os.path.join(directory, "cover.json"))
    names = []
    for k, f in enumerate(p.fields):
        name = f"field_{k:04d}.pbf"
        save_field(f, os.path.join(directory, name))
        names.append(name)
    manifest = {
        "format": "pblab-partition",
        "version": 1,
        "fields": names,
        "subordination": list(p.subordination),
        "cover": "cover.json",
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True)


def load_partition(directory: str) -> PartitionOfUnity:
    from .cover import load_cover

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    cover = load_cover(os.path.join(directory, manifest["cover"]))
    fields = [load_field(os.path.join(directory, n)) for n in manifest["fields"]]
    return PartitionOfUnity(fields=fields, cover=cover,
                            subordination=list(manifest["subordination"]))
