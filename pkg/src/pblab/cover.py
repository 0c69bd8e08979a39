"""Covers as node masks: degree, essentiality, components, enclosing discs.

Digital-topology conventions ("open set" = node mask):

* masks are 4-connected, complements 8-connected — the standard pairing
  that keeps Jordan-style statements true on the grid;
* a mask is a topological disc iff it is 4-connected and its Euler number
  (4-connected foreground count, components minus holes) equals 1; on the
  torus this also rules out non-contractible bands and the full surface;
* the enclosing disc of a connected mask is the complement of the unique
  complement component of area strictly greater than half the surface;
  ties at exactly half (an integer test on cell counts) are not enclosable;
* on the sphere chart a pole belongs to a region iff the region contains
  the full pole-adjacent row; this only affects Euler numbers, never
  connectivity (a full row is already theta-connected).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidGrid, NotEnclosable, RequiresConnected
from .surface import SurfaceGrid, grid_from_descriptor


@dataclass
class CoverSet:
    """One covering set: a nonempty node mask with area metadata."""

    grid: SurfaceGrid
    mask: np.ndarray
    id: int = 0

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.shape:
            raise InvalidGrid("mask shape does not match grid")
        if not self.mask.any():
            raise InvalidGrid(f"cover set {self.id} is empty")

    @property
    def area(self) -> float:
        return float(np.count_nonzero(self.mask)) * self.grid.cell_area


@dataclass
class Cover:
    """An indexed open cover: a list of CoverSets whose union is everything."""

    sets: list[CoverSet] = field(default_factory=list)
    check: bool = True

    def __post_init__(self):
        if not self.sets:
            raise InvalidGrid("cover needs at least one set")
        g = self.sets[0].grid
        for s in self.sets:
            if s.grid != g:
                raise InvalidGrid("cover sets live on different grids")
        if self.check:
            union = np.zeros(g.shape, bool)
            for s in self.sets:
                union |= s.mask
            if not union.all():
                raise InvalidGrid("cover sets do not cover the surface")

    @property
    def grid(self) -> SurfaceGrid:
        return self.sets[0].grid

    def __len__(self) -> int:
        return len(self.sets)

    def multiplicity(self) -> np.ndarray:
        """Number of covering sets through every node."""
        mult = np.zeros(self.grid.shape, np.int32)
        for s in self.sets:
            mult += s.mask
        return mult


def mask_area(mask: np.ndarray, grid: SurfaceGrid) -> float:
    return float(np.count_nonzero(mask)) * grid.cell_area


def degree(c: Cover) -> int:
    """Maximal number of covering sets through a single node."""
    return int(c.multiplicity().max())


def essential_indices(c: Cover) -> list[int]:
    """Indices whose removal breaks the cover (node-exact).

    A set is essential iff it owns a private node, i.e. a node of
    multiplicity one inside its mask.
    """
    mult = c.multiplicity()
    only_here = mult == 1
    return [k for k, s in enumerate(c.sets) if bool((only_here & s.mask).any())]


def connected_components(mask: np.ndarray, grid: SurfaceGrid,
                         connectivity: int = 4) -> list[np.ndarray]:
    """Flood-fill components respecting torus/theta periodicity."""
    labels, n = _kernels.label_components(
        mask, grid.wrap_x, grid.wrap_y, diagonal=(connectivity == 8)
    )
    return [labels == k for k in range(n)]


def _euler4(mask: np.ndarray, grid: SurfaceGrid) -> int:
    """Euler number of the mask, 4-connected foreground convention.

    Bit-quad counting over 2x2 windows; on the sphere chart the array is
    padded with virtual pole rows and each enclosed pole adds one cap.
    """
    m = mask.astype(np.int8)
    poles = 0
    if grid.topology == "sphere_cylindrical":
        south = bool(mask[0].all())
        north = bool(mask[-1].all())
        poles = int(south) + int(north)
        pad_s = np.full((1, grid.ny), south, np.int8)
        pad_n = np.full((1, grid.ny), north, np.int8)
        m = np.vstack([pad_s, m, pad_n])
        w00 = m[:-1]
        w10 = m[1:]
    else:
        w00 = m
        w10 = np.roll(m, -1, axis=0)
    w01 = np.roll(w00, -1, axis=1)
    w11 = np.roll(w10, -1, axis=1)
    n = w00 + w10 + w01 + w11
    q1 = int(np.count_nonzero(n == 1))
    q3 = int(np.count_nonzero(n == 3))
    diag = (n == 2) & (w00 == w11)
    qd = int(np.count_nonzero(diag))
    quad = q1 - q3 + 2 * qd
    assert quad % 4 == 0
    return quad // 4 + poles


def is_disc(mask: np.ndarray, grid: SurfaceGrid) -> bool:
    """Grid test for "open topological disc"."""
    if not mask.any() or mask.all():
        return False
    _, n = _kernels.label_components(mask, grid.wrap_x, grid.wrap_y, diagonal=False)
    if n != 1:
        return False
    return _euler4(mask, grid) == 1


def enclosing_disc(mask: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    """Fill a connected mask to the minimal grid disc containing it.

    Removes from the surface the unique complement component of area
    strictly above half; raises NotEnclosable when no such component
    exists or when the filled result is not a disc (non-contractible
    masks on the torus).
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise RequiresConnected("empty mask")
    _, n = _kernels.label_components(mask, grid.wrap_x, grid.wrap_y, diagonal=False)
    if n != 1:
        raise RequiresConnected(f"mask has {n} components")
    comp = ~mask
    labels, ncomp = _kernels.label_components(comp, grid.wrap_x, grid.wrap_y, diagonal=True)
    if ncomp == 0:
        raise NotEnclosable("mask is the whole surface")
    counts = np.bincount(labels[comp].ravel(), minlength=ncomp)
    big = np.nonzero(2 * counts > grid.n_nodes)[0]  # strict half-area test
    if big.size == 0:
        raise NotEnclosable("no complement component exceeds half the area")
    disc = labels != big[0]
    _, ndisc = _kernels.label_components(disc, grid.wrap_x, grid.wrap_y, diagonal=False)
    if ndisc != 1 or _euler4(disc, grid) != 1:
        raise NotEnclosable("filled region is not a topological disc")
    return disc


def displacement_energy(mask: np.ndarray, grid: SurfaceGrid) -> float:
    """Area of the enclosing disc; +inf when the mask is not enclosable."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise RequiresConnected("empty mask")
    _, n = _kernels.label_components(mask, grid.wrap_x, grid.wrap_y, diagonal=False)
    if n != 1:
        raise RequiresConnected(
            f"mask has {n} components; split with connected_components first"
        )
    try:
        return mask_area(enclosing_disc(mask, grid), grid)
    except NotEnclosable:
        return math.inf


def set_energy(mask: np.ndarray, grid: SurfaceGrid) -> float:
    """Displacement energy of a possibly disconnected set.

    Splits into components and takes the max of their enclosing-disc
    areas (disconnected sets reduce to their components).
    """
    e = 0.0
    for comp in connected_components(mask, grid, connectivity=4):
        e = max(e, displacement_energy(comp, grid))
        if math.isinf(e):
            break
    return e


def cover_energy(c: Cover) -> float:
    """max_i e(U_i) over the covering sets."""
    return max(set_energy(s.mask, c.grid) for s in c.sets)


def boundary_edge_arrays(mask: np.ndarray, grid: SurfaceGrid):
    """Boolean arrays marking boundary cell-edges in the four directions.

    Entry (i, j) of the '+x' array is True when node (i, j) is inside and
    its +x neighbour is outside (off-chart neighbours count as outside).
    """
    out = {}
    for name, axis, shift in (("+x", 0, -1), ("-x", 0, 1), ("+y", 1, -1), ("-y", 1, 1)):
        nb = np.roll(mask, shift, axis=axis)
        if axis == 0 and not grid.wrap_x:
            nb = nb.copy()
            if shift == -1:
                nb[-1, :] = False
            else:
                nb[0, :] = False
        out[name] = mask & ~nb
    return out


# ---------------------------------------------------------------------------
# serialization: run-length-encoded masks with a JSON header
# ---------------------------------------------------------------------------


def _rle_encode(mask: np.ndarray) -> list[list[int]]:
    flat = np.concatenate([[0], mask.ravel().astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(flat))
    starts, stops = edges[::2], edges[1::2]
    return [[int(a), int(b - a)] for a, b in zip(starts, stops)]


def _rle_decode(runs: list[list[int]], shape: tuple[int, int]) -> np.ndarray:
    flat = np.zeros(shape[0] * shape[1], bool)
    for start, length in runs:
        flat[start : start + length] = True
    return flat.reshape(shape)


def save_cover(c: Cover, path: str):
    doc = {
        "format": "pblab-cover",
        "version": 1,
        "grid": c.grid.descriptor(),
        "sets": [{"id": s.id, "runs": _rle_encode(s.mask)} for s in c.sets],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_cover(path: str) -> Cover:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "pblab-cover":
        raise InvalidGrid(f"{path} is not a pblab cover file")
    grid = grid_from_descriptor(doc["grid"])
    sets = [
        CoverSet(grid, _rle_decode(s["runs"], grid.shape), id=s["id"])
        for s in doc["sets"]
    ]
    return Cover(sets)
