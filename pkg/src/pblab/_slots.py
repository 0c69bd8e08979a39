"""Per-node derivative slots for sparse bracket aggregation.

For a family of fields, each node stores the chart derivatives of the few
fields whose (stencil-dilated) support reaches it.  All pairwise bracket
quantities then reduce to small per-node contractions, which is what the
kernels in ``_kernels`` consume.
"""

from __future__ import annotations

import numpy as np

from .surface import SurfaceGrid, chart_derivatives


def _dilate_plus(mask: np.ndarray, grid: SurfaceGrid) -> np.ndarray:
    """Dilation by the central-difference stencil (a plus shape)."""
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


def build_node_slots(value_arrays: list[np.ndarray], grid: SurfaceGrid):
    """Scatter per-field chart derivatives into per-node slot arrays.

    Returns ``(counts, idx, dx, dy)`` with shapes (n,), (n, kmax) where n
    is the node count and kmax the maximal number of fields whose dilated
    support meets one node.  Slot order follows field order, so results
    are deterministic.
    """
    n = grid.n_nodes
    dil_flat = []
    counts = np.zeros(n, np.int32)
    for vals in value_arrays:
        d = _dilate_plus(np.abs(vals) > 0.0, grid).ravel()
        dil_flat.append(d)
        counts += d
    kmax = max(1, int(counts.max()))
    idx = np.zeros((n, kmax), np.int32)
    dx = np.zeros((n, kmax), np.float64)
    dy = np.zeros((n, kmax), np.float64)
    counts[:] = 0
    for i, vals in enumerate(value_arrays):
        fx, fy = chart_derivatives(vals, grid)
        nz = np.flatnonzero(dil_flat[i])
        pos = counts[nz]
        idx[nz, pos] = i
        dx[nz, pos] = fx.ravel()[nz]
        dy[nz, pos] = fy.ravel()[nz]
        counts[nz] = pos + 1
    return counts, idx, dx, dy


def local_bracket_matrix(p: int, counts, idx, dx, dy, countsG=None, idxG=None,
                         dxG=None, dyG=None, inv_dens: float = 1.0):
    """Dense local matrix B_ab = {f_a, g_b}(p) restricted to active fields.

    Returns ``(B, rows, cols)`` with rows/cols the active field indices.
    Pass only the first slot family for the F = G case.
    """
    if countsG is None:
        countsG, idxG, dxG, dyG = counts, idx, dx, dy
    kf = int(counts[p])
    kg = int(countsG[p])
    fx = dx[p, :kf]
    fy = dy[p, :kf]
    gx = dxG[p, :kg]
    gy = dyG[p, :kg]
    B = (fx[:, None] * gy[None, :] - fy[:, None] * gx[None, :]) * inv_dens
    return B, idx[p, :kf].copy(), idxG[p, :kg].copy()


def cube_max_small(B: np.ndarray):
    """Exact max_{x,y} x^T B y over sign vectors for a small matrix.

    Enumerates the smaller side; returns (value, x, y).
    """
    transposed = False
    if B.shape[0] > B.shape[1]:
        B = B.T
        transposed = True
    k = B.shape[0]
    ncodes = 1 << (k - 1) if k > 1 else 1
    codes = np.arange(ncodes, dtype=np.int64)
    signs = np.ones((ncodes, k))
    if k > 1:
        signs[:, 1:] = 1.0 - 2.0 * ((codes[:, None] >> np.arange(k - 1)) & 1)
    M = signs @ B
    vals = np.abs(M).sum(axis=1)
    c = int(vals.argmax())
    x = signs[c]
    y = np.sign(B.T @ x)
    y[y == 0] = 1.0
    if transposed:
        return float(vals[c]), y, x
    return float(vals[c]), x, y
