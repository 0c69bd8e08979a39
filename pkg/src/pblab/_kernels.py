"""Hot kernels, each in a numba @njit flavour and a pure numpy/scipy flavour.

The public wrappers at the bottom dispatch on the active backend (see
`_backend`).  Both flavours implement identical algorithms with identical
tie-breaking, so results agree across backends (values bit-for-bit for
integer outputs, to rounding for float reductions).

Geometry conventions used throughout:

* masks and fields are (nx, ny) arrays; axis 0 may wrap (torus x) or not
  (sphere z), axis 1 always wraps (torus y, sphere theta);
* grid cells are indexed by their lower-left node, cell id = i * ny + j;
* contour segments are stored in node-index units, one segment per cell,
  endpoints on cell edges; seam cells use the unwrapped local frame, so
  two contours meeting in the same cell share a coordinate frame.
"""

from __future__ import annotations

import numpy as np

from ._backend import HAVE_NUMBA, using_numba

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# connected-component labelling
# ---------------------------------------------------------------------------


@njit(cache=True)
def _label_bfs_numba(mask, wrap_x, wrap_y, diagonal):
    nx, ny = mask.shape
    labels = np.full((nx, ny), -1, np.int32)
    stack = np.empty(nx * ny, np.int64)
    current = 0
    for i0 in range(nx):
        for j0 in range(ny):
            if mask[i0, j0] == 0 or labels[i0, j0] >= 0:
                continue
            top = 1
            stack[0] = i0 * ny + j0
            labels[i0, j0] = current
            while top > 0:
                top -= 1
                p = stack[top]
                i = p // ny
                j = p % ny
                for di in range(-1, 2):
                    ii = i + di
                    if ii < 0:
                        if not wrap_x:
                            continue
                        ii += nx
                    elif ii >= nx:
                        if not wrap_x:
                            continue
                        ii -= nx
                    for dj in range(-1, 2):
                        if di == 0 and dj == 0:
                            continue
                        if not diagonal and di != 0 and dj != 0:
                            continue
                        jj = j + dj
                        if jj < 0:
                            if not wrap_y:
                                continue
                            jj += ny
                        elif jj >= ny:
                            if not wrap_y:
                                continue
                            jj -= ny
                        if mask[ii, jj] != 0 and labels[ii, jj] < 0:
                            labels[ii, jj] = current
                            stack[top] = ii * ny + jj
                            top += 1
            current += 1
    return labels, current


def _label_numpy(mask, wrap_x, wrap_y, diagonal):
    from scipy import ndimage

    structure = np.ones((3, 3), bool) if diagonal else None
    raw, n = ndimage.label(mask, structure=structure)
    if n == 0:
        return np.full(mask.shape, -1, np.int32), 0

    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    def merge_rows(la, lb):
        both = (la > 0) & (lb > 0)
        for a, b in zip(la[both], lb[both]):
            union(a, b)

    if wrap_y:
        merge_rows(raw[:, -1], raw[:, 0])
        if diagonal:
            merge_rows(raw[:-1, -1], raw[1:, 0])
            merge_rows(raw[1:, -1], raw[:-1, 0])
    if wrap_x:
        merge_rows(raw[-1, :], raw[0, :])
        if diagonal:
            merge_rows(raw[-1, :-1], raw[0, 1:])
            merge_rows(raw[-1, 1:], raw[0, :-1])
    if wrap_x and wrap_y and diagonal:
        merge_rows(raw[-1:, -1], raw[:1, 0])
        merge_rows(raw[:1, -1], raw[-1:, 0])

    roots = np.array([find(a) for a in range(n + 1)])
    # compact to 0..m-1 in first-appearance order (matches BFS scan order)
    flat = roots[raw.ravel()]
    vals = flat[flat > 0]
    uniq, first = np.unique(vals, return_index=True)
    remap = -np.ones(n + 1, np.int64)
    remap[uniq[np.argsort(first)]] = np.arange(uniq.size)
    labels = np.where(raw > 0, remap[roots[raw]], -1).astype(np.int32)
    return labels, int(uniq.size)


def label_components(mask, wrap_x, wrap_y, diagonal=False):
    """Label connected components of a boolean mask; -1 marks background.

    Components are numbered by first appearance in row-major scan order, so
    the labelling is identical across backends.
    """
    m = np.ascontiguousarray(mask.astype(np.uint8))
    if using_numba():
        labels, n = _label_bfs_numba(m, wrap_x, wrap_y, diagonal)
        return labels, int(n)
    return _label_numpy(m, wrap_x, wrap_y, diagonal)


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

# edge numbering inside a cell: 0 bottom, 1 right, 2 top, 3 left


@njit(cache=True)
def _march_numba(values, level, wrap_x, wrap_y):
    nx, ny = values.shape
    ncx = nx if wrap_x else nx - 1
    # pass 1: count segments
    nseg = 0
    for i in range(ncx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            c = 0
            if values[i, j] > level:
                c |= 1
            if values[ip, j] > level:
                c |= 2
            if values[ip, jp] > level:
                c |= 4
            if values[i, jp] > level:
                c |= 8
            if c == 0 or c == 15:
                continue
            nseg += 2 if (c == 5 or c == 10) else 1
    segs = np.empty((nseg, 4), np.float64)
    cells = np.empty(nseg, np.int64)
    k = 0
    ex = np.empty(4, np.float64)
    ey = np.empty(4, np.float64)
    for i in range(ncx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            v00 = values[i, j]
            v10 = values[ip, j]
            v11 = values[ip, jp]
            v01 = values[i, jp]
            c = 0
            if v00 > level:
                c |= 1
            if v10 > level:
                c |= 2
            if v11 > level:
                c |= 4
            if v01 > level:
                c |= 8
            if c == 0 or c == 15:
                continue
            # edge crossing points in the cell-local frame, offset by (i, j)
            if (v00 > level) != (v10 > level):
                t = (level - v00) / (v10 - v00)
                ex[0] = i + t
                ey[0] = j
            if (v10 > level) != (v11 > level):
                t = (level - v10) / (v11 - v10)
                ex[1] = i + 1.0
                ey[1] = j + t
            if (v01 > level) != (v11 > level):
                t = (level - v01) / (v11 - v01)
                ex[2] = i + t
                ey[2] = j + 1.0
            if (v00 > level) != (v01 > level):
                t = (level - v00) / (v01 - v00)
                ex[3] = i
                ey[3] = j + t
            cell = i * ny + j
            if c == 5 or c == 10:
                centre_hi = 0.25 * (v00 + v10 + v11 + v01) > level
                if c == 5:
                    if centre_hi:
                        e0, e1, e2, e3 = 0, 1, 2, 3
                    else:
                        e0, e1, e2, e3 = 3, 0, 1, 2
                else:
                    if centre_hi:
                        e0, e1, e2, e3 = 0, 3, 1, 2
                    else:
                        e0, e1, e2, e3 = 0, 1, 2, 3
                segs[k, 0] = ex[e0]
                segs[k, 1] = ey[e0]
                segs[k, 2] = ex[e1]
                segs[k, 3] = ey[e1]
                cells[k] = cell
                k += 1
                segs[k, 0] = ex[e2]
                segs[k, 1] = ey[e2]
                segs[k, 2] = ex[e3]
                segs[k, 3] = ey[e3]
                cells[k] = cell
                k += 1
            else:
                if c == 1 or c == 14:
                    e0, e1 = 3, 0
                elif c == 2 or c == 13:
                    e0, e1 = 0, 1
                elif c == 3 or c == 12:
                    e0, e1 = 3, 1
                elif c == 4 or c == 11:
                    e0, e1 = 1, 2
                elif c == 6 or c == 9:
                    e0, e1 = 0, 2
                else:  # 7, 8
                    e0, e1 = 3, 2
                segs[k, 0] = ex[e0]
                segs[k, 1] = ey[e0]
                segs[k, 2] = ex[e1]
                segs[k, 3] = ey[e1]
                cells[k] = cell
                k += 1
    return segs, cells


def _march_numpy(values, level, wrap_x, wrap_y):
    nx, ny = values.shape
    if wrap_x:
        v00 = values
        v10 = np.roll(values, -1, axis=0)
    else:
        v00 = values[:-1]
        v10 = values[1:]
    v01 = np.roll(v00, -1, axis=1)
    v11 = np.roll(v10, -1, axis=1)
    b = (
        (v00 > level).astype(np.int8)
        | ((v10 > level) << 1)
        | ((v11 > level) << 2)
        | ((v01 > level) << 3)
    )
    ncx = v00.shape[0]
    ii, jj = np.nonzero((b != 0) & (b != 15))
    if ii.size == 0:
        return np.empty((0, 4)), np.empty(0, np.int64)
    case = b[ii, jj]
    c00, c10, c11, c01 = v00[ii, jj], v10[ii, jj], v11[ii, jj], v01[ii, jj]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = np.empty((4, ii.size))
        py = np.empty((4, ii.size))
        t0 = (level - c00) / (c10 - c00)
        px[0], py[0] = ii + t0, jj.astype(float)
        t1 = (level - c10) / (c11 - c10)
        px[1], py[1] = ii + 1.0, jj + t1
        t2 = (level - c01) / (c11 - c01)
        px[2], py[2] = ii + t2, jj + 1.0
        t3 = (level - c00) / (c01 - c00)
        px[3], py[3] = ii.astype(float), jj + t3
    centre_hi = 0.25 * (c00 + c10 + c11 + c01) > level
    edge_a = np.empty(ii.size, np.int8)
    edge_b = np.empty(ii.size, np.int8)
    simple_pairs = {
        1: (3, 0), 14: (3, 0), 2: (0, 1), 13: (0, 1), 3: (3, 1), 12: (3, 1),
        4: (1, 2), 11: (1, 2), 6: (0, 2), 9: (0, 2), 7: (3, 2), 8: (3, 2),
    }
    for cs, (ea, eb) in simple_pairs.items():
        sel = case == cs
        edge_a[sel] = ea
        edge_b[sel] = eb
    sad = (case == 5) | (case == 10)
    # saddle: first segment
    s5, s10 = case == 5, case == 10
    edge_a[s5] = np.where(centre_hi[s5], 0, 3)
    edge_b[s5] = np.where(centre_hi[s5], 1, 0)
    edge_a[s10] = 0
    edge_b[s10] = np.where(centre_hi[s10], 3, 1)
    cell_ids = ii * ny + jj
    cols = np.arange(ii.size)
    seg1 = np.stack(
        [px[edge_a, cols], py[edge_a, cols], px[edge_b, cols], py[edge_b, cols]], axis=1
    )
    # saddle: second segment
    ea2 = np.empty(ii.size, np.int8)
    eb2 = np.empty(ii.size, np.int8)
    ea2[s5] = np.where(centre_hi[s5], 2, 1)
    eb2[s5] = np.where(centre_hi[s5], 3, 2)
    ea2[s10] = np.where(centre_hi[s10], 1, 2)
    eb2[s10] = np.where(centre_hi[s10], 2, 3)
    segs = [seg1]
    cells = [cell_ids]
    if sad.any():
        cols2 = cols[sad]
        seg2 = np.stack(
            [px[ea2[sad], cols2], py[ea2[sad], cols2], px[eb2[sad], cols2], py[eb2[sad], cols2]],
            axis=1,
        )
        segs.append(seg2)
        cells.append(cell_ids[sad])
    segs = np.concatenate(segs, axis=0)
    cells = np.concatenate(cells)
    order = np.argsort(cells, kind="stable")
    return np.ascontiguousarray(segs[order]), np.ascontiguousarray(cells[order])


def marching_segments(values, level, wrap_x, wrap_y):
    """Extract sub-cell contour segments of ``values == level``.

    Returns ``(segs, cells)`` with segs in node-index units, sorted by cell
    id.  Corners exactly equal to the level are the caller's problem (nudge
    first).
    """
    vals = np.ascontiguousarray(values, dtype=np.float64)
    if using_numba():
        segs, cells = _march_numba(vals, float(level), wrap_x, wrap_y)
        order = np.argsort(cells, kind="stable")
        return np.ascontiguousarray(segs[order]), np.ascontiguousarray(cells[order])
    return _march_numpy(vals, float(level), wrap_x, wrap_y)


# ---------------------------------------------------------------------------
# segment-segment crossing counts
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _cross_test(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2, band):
    ux, uy = ax2 - ax1, ay2 - ay1
    vx, vy = bx2 - bx1, by2 - by1
    d1 = ux * (by1 - ay1) - uy * (bx1 - ax1)
    d2 = ux * (by2 - ay1) - uy * (bx2 - ax1)
    d3 = vx * (ay1 - by1) - vy * (ax1 - bx1)
    d4 = vx * (ay2 - by1) - vy * (ax2 - bx1)
    mag = (abs(ux) + abs(uy)) * (abs(vx) + abs(vy)) + 1e-300
    eps = band * mag
    a1, a2, a3, a4 = abs(d1), abs(d2), abs(d3), abs(d4)
    if max(a1, a2) <= eps or max(a3, a4) <= eps:
        return 2  # (near-)collinear pair
    if a1 <= eps or a2 <= eps or a3 <= eps or a4 <= eps:
        if d1 * d2 <= 0.0 and d3 * d4 <= 0.0:
            return 2  # touching within tolerance
        return 0
    if d1 * d2 < 0.0 and d3 * d4 < 0.0:
        return 1
    return 0


@njit(cache=True)
def _count_crossings_numba(segsA, cellsA, segsB, cellsB, band):
    na, nb = cellsA.shape[0], cellsB.shape[0]
    ia = 0
    ib = 0
    count = 0
    ndegen = 0
    while ia < na and ib < nb:
        ca = cellsA[ia]
        cb = cellsB[ib]
        if ca < cb:
            ia += 1
        elif cb < ca:
            ib += 1
        else:
            ja = ia
            while ja < na and cellsA[ja] == ca:
                ja += 1
            jb = ib
            while jb < nb and cellsB[jb] == cb:
                jb += 1
            for u in range(ia, ja):
                for v in range(ib, jb):
                    r = _cross_test(
                        segsA[u, 0], segsA[u, 1], segsA[u, 2], segsA[u, 3],
                        segsB[v, 0], segsB[v, 1], segsB[v, 2], segsB[v, 3],
                        band,
                    )
                    if r == 1:
                        count += 1
                    elif r == 2:
                        ndegen += 1
            ia = ja
            ib = jb
    return count, ndegen


def _count_crossings_numpy(segsA, cellsA, segsB, cellsB, band):
    common, ia_first, ib_first = np.intersect1d(
        cellsA, cellsB, assume_unique=False, return_indices=True
    )
    if common.size == 0:
        return 0, 0
    # expand to all pairs within each shared cell
    counts_a = np.searchsorted(cellsA, common, side="right") - np.searchsorted(
        cellsA, common, side="left"
    )
    counts_b = np.searchsorted(cellsB, common, side="right") - np.searchsorted(
        cellsB, common, side="left"
    )
    starts_a = np.searchsorted(cellsA, common, side="left")
    starts_b = np.searchsorted(cellsB, common, side="left")
    idx_a = []
    idx_b = []
    for sa, ka, sb, kb in zip(starts_a, counts_a, starts_b, counts_b):
        aa = np.arange(sa, sa + ka)
        bb = np.arange(sb, sb + kb)
        A, B = np.meshgrid(aa, bb, indexing="ij")
        idx_a.append(A.ravel())
        idx_b.append(B.ravel())
    idx_a = np.concatenate(idx_a)
    idx_b = np.concatenate(idx_b)
    a = segsA[idx_a]
    b = segsB[idx_b]
    ux, uy = a[:, 2] - a[:, 0], a[:, 3] - a[:, 1]
    vx, vy = b[:, 2] - b[:, 0], b[:, 3] - b[:, 1]
    d1 = ux * (b[:, 1] - a[:, 1]) - uy * (b[:, 0] - a[:, 0])
    d2 = ux * (b[:, 3] - a[:, 1]) - uy * (b[:, 2] - a[:, 0])
    d3 = vx * (a[:, 1] - b[:, 1]) - vy * (a[:, 0] - b[:, 0])
    d4 = vx * (a[:, 3] - b[:, 1]) - vy * (a[:, 2] - b[:, 0])
    eps = band * ((np.abs(ux) + np.abs(uy)) * (np.abs(vx) + np.abs(vy)) + 1e-300)
    a1, a2, a3, a4 = np.abs(d1), np.abs(d2), np.abs(d3), np.abs(d4)
    collinear = (np.maximum(a1, a2) <= eps) | (np.maximum(a3, a4) <= eps)
    small = (a1 <= eps) | (a2 <= eps) | (a3 <= eps) | (a4 <= eps)
    would_cross = (d1 * d2 <= 0.0) & (d3 * d4 <= 0.0)
    degen = collinear | (small & would_cross & ~collinear)
    proper = (d1 * d2 < 0.0) & (d3 * d4 < 0.0) & ~small & ~collinear
    return int(proper.sum()), int(degen.sum())


def count_crossings(segsA, cellsA, segsB, cellsB, band=1e-12):
    """Count proper crossings between two cell-sorted segment sets.

    Returns ``(count, n_degenerate)``; a nonzero second entry means the
    configuration is not generic at the tolerance and should be re-nudged.
    """
    if cellsA.size == 0 or cellsB.size == 0:
        return 0, 0
    if using_numba():
        c, d = _count_crossings_numba(
            np.ascontiguousarray(segsA), np.ascontiguousarray(cellsA),
            np.ascontiguousarray(segsB), np.ascontiguousarray(cellsB), band,
        )
        return int(c), int(d)
    return _count_crossings_numpy(segsA, cellsA, segsB, cellsB, band)


# ---------------------------------------------------------------------------
# pairwise bracket accumulation over node slots
# ---------------------------------------------------------------------------


@njit(cache=True)
def _bracket_accumulate_numba(
    countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG, inv_dens, cell_area, nF, nG
):
    nnodes = countsF.shape[0]
    pair_l1 = np.zeros((nF, nG), np.float64)
    pair_sup = np.zeros((nF, nG), np.float64)
    sum_node = np.zeros(nnodes, np.float64)
    for p in range(nnodes):
        kf = countsF[p]
        kg = countsG[p]
        if kf == 0 or kg == 0:
            continue
        s = 0.0
        for a in range(kf):
            ia = idxF[p, a]
            fx = dxF[p, a]
            fy = dyF[p, a]
            for b in range(kg):
                v = (fx * dyG[p, b] - fy * dxG[p, b]) * inv_dens
                av = abs(v)
                jb = idxG[p, b]
                pair_l1[ia, jb] += av * cell_area
                if av > pair_sup[ia, jb]:
                    pair_sup[ia, jb] = av
                s += av
        sum_node[p] = s
    return pair_l1, pair_sup, sum_node


def _bracket_accumulate_numpy(
    countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG, inv_dens, cell_area, nF, nG
):
    nnodes = countsF.shape[0]
    pair_l1 = np.zeros((nF, nG))
    pair_sup = np.zeros((nF, nG))
    sum_node = np.zeros(nnodes)
    act = np.nonzero((countsF > 0) & (countsG > 0))[0]
    if act.size == 0:
        return pair_l1, pair_sup, sum_node
    B = (
        dxF[act][:, :, None] * dyG[act][:, None, :]
        - dyF[act][:, :, None] * dxG[act][:, None, :]
    ) * inv_dens
    absB = np.abs(B)
    # padded slots carry zero derivatives and index 0; they add exact zeros
    ii = idxF[act][:, :, None]
    jj = idxG[act][:, None, :]
    np.add.at(pair_l1, (ii, jj), absB * cell_area)
    np.maximum.at(pair_sup, (ii, jj), absB)
    sum_node[act] = absB.sum(axis=(1, 2))
    return pair_l1, pair_sup, sum_node


def bracket_accumulate(countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
                       inv_dens, cell_area, nF, nG):
    """Accumulate |{f_i, g_j}| over nodes from per-node derivative slots.

    Returns the pairwise L1 matrix (cell-area weighted), the pairwise sup
    matrix, and the per-node value of sum_{i,j} |{f_i, g_j}|.
    """
    args = (countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
            float(inv_dens), float(cell_area), int(nF), int(nG))
    if using_numba():
        return _bracket_accumulate_numba(*args)
    return _bracket_accumulate_numpy(*args)


# ---------------------------------------------------------------------------
# hypercube bilinear maximisation over nodes
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _hash_sign(j, k, seed):
    h = np.uint64(j) * np.uint64(2654435761) + np.uint64(k) * np.uint64(40503) + np.uint64(seed)
    h ^= h >> np.uint64(13)
    h *= np.uint64(0x9E3779B97F4A7C15)
    return 1.0 if (h >> np.uint64(17)) & np.uint64(1) else -1.0


@njit(cache=True)
def _node_cube_max(B, kf, kg, exact_bits, starts, iters, node_key, seed):
    """Max over sign vectors of |x^T B y| for one node; B is (kf, kg).

    Enumerates the smaller side exactly when it fits in exact_bits,
    otherwise runs seeded alternating ascent.  Returns (value, exact).
    """
    # orient so the enumerated side is the smaller one
    if kf <= kg:
        n1, n2 = kf, kg
        transpose = False
    else:
        n1, n2 = kg, kf
        transpose = True
    if n1 <= exact_bits:
        best = 0.0
        ncodes = 1 << (n1 - 1) if n1 > 1 else 1
        for code in range(ncodes):
            v = 0.0
            for b in range(n2):
                acc = 0.0
                for a in range(n1):
                    sgn = -1.0 if (code >> a) & 1 else 1.0
                    acc += sgn * (B[a, b] if not transpose else B[b, a])
                v += abs(acc)
            if v > best:
                best = v
        return best, True
    # alternating ascent from hashed sign starts
    best = 0.0
    x = np.empty(n1)
    y = np.empty(n2)
    for k in range(starts):
        for j in range(n2):
            y[j] = _hash_sign(j, k + node_key * 131, seed)
        for _ in range(iters):
            for a in range(n1):
                acc = 0.0
                for b in range(n2):
                    acc += (B[a, b] if not transpose else B[b, a]) * y[b]
                x[a] = 1.0 if acc >= 0 else -1.0
            for b in range(n2):
                acc = 0.0
                for a in range(n1):
                    acc += (B[a, b] if not transpose else B[b, a]) * x[a]
                y[b] = 1.0 if acc >= 0 else -1.0
        v = 0.0
        for b in range(n2):
            acc = 0.0
            for a in range(n1):
                acc += (B[a, b] if not transpose else B[b, a]) * x[a]
            v += abs(acc)
        if v > best:
            best = v
    return best, False


@njit(cache=True)
def _pb_scan_numba(countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
                   inv_dens, exact_bits, starts, iters, seed):
    nnodes = countsF.shape[0]
    kmaxF = idxF.shape[1]
    kmaxG = idxG.shape[1]
    B = np.empty((kmaxF, kmaxG))
    best = 0.0
    all_exact = True
    for p in range(nnodes):
        kf = countsF[p]
        kg = countsG[p]
        if kf == 0 or kg == 0:
            continue
        ceil_p = 0.0
        for a in range(kf):
            fx = dxF[p, a]
            fy = dyF[p, a]
            for b in range(kg):
                v = (fx * dyG[p, b] - fy * dxG[p, b]) * inv_dens
                B[a, b] = v
                ceil_p += abs(v)
        if ceil_p <= best:
            continue  # sum |B_ij| bounds the cube max from above
        v, exact = _node_cube_max(B[:kf, :kg], kf, kg, exact_bits, starts, iters, p, seed)
        if not exact:
            all_exact = False
        if v > best:
            best = v
    return best, all_exact


def _pb_scan_numpy(countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
                   inv_dens, exact_bits, starts, iters, seed):
    act = np.nonzero((countsF > 0) & (countsG > 0))[0]
    if act.size == 0:
        return 0.0, True
    B = (
        dxF[act][:, :, None] * dyG[act][:, None, :]
        - dyF[act][:, :, None] * dxG[act][:, None, :]
    ) * inv_dens
    kmaxF = int(countsF[act].max())
    kmaxG = int(countsG[act].max())
    B = B[:, :kmaxF, :kmaxG]
    if kmaxG < kmaxF:
        B = np.swapaxes(B, 1, 2)
        kmaxF, kmaxG = kmaxG, kmaxF
    if kmaxF <= exact_bits:
        ncodes = 1 << (kmaxF - 1) if kmaxF > 1 else 1
        best = 0.0
        chunk = max(1, (1 << 22) // max(1, B.shape[0] * kmaxG))
        codes = np.arange(ncodes, dtype=np.int64)
        for lo in range(0, ncodes, chunk):
            sub = codes[lo : lo + chunk]
            # x_0 fixed to +1 (global sign flip leaves the value unchanged)
            signs = np.ones((sub.size, kmaxF))
            if kmaxF > 1:
                signs[:, 1:] = 1.0 - 2.0 * ((sub[:, None] >> np.arange(kmaxF - 1)) & 1)
            # (nodes, codes, kg) -> abs sum over kg, max
            M = np.einsum("ck,nkg->ncg", signs, B)
            v = np.abs(M).sum(axis=2).max()
            best = max(best, float(v))
        return best, True
    # alternating ascent, vectorised over nodes
    n = B.shape[0]
    best = 0.0
    for k in range(starts):
        j = np.arange(kmaxG, dtype=np.uint64)
        h = j * np.uint64(2654435761) + np.uint64(k) * np.uint64(40503) + np.uint64(seed)
        h ^= h >> np.uint64(13)
        h *= np.uint64(0x9E3779B97F4A7C15)
        y = np.where((h >> np.uint64(17)) & np.uint64(1), 1.0, -1.0)
        y = np.broadcast_to(y, (n, kmaxG)).copy()
        for _ in range(iters):
            x = np.sign(np.einsum("nkg,ng->nk", B, y))
            x[x == 0] = 1.0
            y = np.sign(np.einsum("nkg,nk->ng", B, x))
            y[y == 0] = 1.0
        v = np.abs(np.einsum("nkg,nk->ng", B, x)).sum(axis=1).max()
        best = max(best, float(v))
    return best, False


def pb_upper_scan(countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
                  inv_dens, exact_bits=16, starts=32, iters=16, seed=0):
    """Max over nodes of the hypercube bilinear maximum of the local bracket
    matrix.  Returns ``(value, certified_exact)``."""
    args = (countsF, idxF, dxF, dyF, countsG, idxG, dxG, dyG,
            float(inv_dens), int(exact_bits), int(starts), int(iters), int(seed))
    if using_numba():
        v, exact = _pb_scan_numba(*args)
        return float(v), bool(exact)
    return _pb_scan_numpy(*args)


# ---------------------------------------------------------------------------
# exact hypercube maximisation of an antisymmetric Gram matrix
# ---------------------------------------------------------------------------


@njit(cache=True)
def _gray_max_numba(A):
    N = A.shape[0]
    g = np.zeros(N)
    for j in range(N):
        for i in range(N):
            g[j] += A[i, j]
    best = 0.0
    for j in range(N):
        best += abs(g[j])
    bits = np.zeros(N, np.uint8)
    best_bits = np.zeros(N, np.uint8)
    ncodes = (1 << (N - 1)) if N > 1 else 1
    for c in range(1, ncodes):
        cc = c
        tz = 0
        while cc & 1 == 0:
            cc >>= 1
            tz += 1
        k = 1 + tz
        if bits[k] == 0:
            bits[k] = 1
            sgn = -2.0
        else:
            bits[k] = 0
            sgn = 2.0
        v = 0.0
        for j in range(N):
            g[j] += sgn * A[k, j]
            v += abs(g[j])
        if v > best:
            best = v
            best_bits[:] = bits[:]
    return best, best_bits


def _gray_max_numpy(A):
    N = A.shape[0]
    ncodes = (1 << (N - 1)) if N > 1 else 1
    best = -1.0
    best_code = 0
    chunk = 1 << 16
    for lo in range(0, ncodes, chunk):
        codes = np.arange(lo, min(lo + chunk, ncodes), dtype=np.int64)
        # x_0 fixed to +1; code bits 0..N-2 drive x_1..x_{N-1}
        signs = np.ones((codes.size, N))
        if N > 1:
            signs[:, 1:] = 1.0 - 2.0 * ((codes[:, None] >> np.arange(N - 1)) & 1)
        vals = np.abs(signs @ A).sum(axis=1)
        k = int(vals.argmax())
        if vals[k] > best:
            best = float(vals[k])
            best_code = int(codes[k])
    bits = np.zeros(N, np.uint8)
    if N > 1:
        bits[1:] = (best_code >> np.arange(N - 1)) & 1
    return best, bits


def gram_cube_max(A):
    """Exact ``max_{x,y in {-1,1}^N} x^T A y`` for antisymmetric A.

    Returns ``(value, x, y)`` with witness sign vectors.  Cost 2^(N-1).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    if using_numba():
        best, bits = _gray_max_numba(A)
    else:
        best, bits = _gray_max_numpy(A)
    x = 1.0 - 2.0 * bits.astype(np.float64)
    y = np.sign(A.T @ x)
    y[y == 0] = 1.0
    return float(best), x, y


# ---------------------------------------------------------------------------
# polyline rasterisation onto a supersampled grid
# ---------------------------------------------------------------------------

_RASTER_SAMPLES = 17  # spacing < 1/3 supercell for sub-cell segments at ss=4


@njit(cache=True)
def _rasterize_numba(segs, ss, nxs, nys, wrap_x, out):
    n = segs.shape[0]
    for k in range(n):
        x1, y1, x2, y2 = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
        for m in range(_RASTER_SAMPLES):
            t = m / (_RASTER_SAMPLES - 1.0)
            x = (x1 + t * (x2 - x1)) * ss
            y = (y1 + t * (y2 - y1)) * ss
            i = int(np.floor(x))
            j = int(np.floor(y))
            if wrap_x:
                i %= nxs
            elif i < 0:
                i = 0
            elif i >= nxs:
                i = nxs - 1
            j %= nys
            out[i, j] = 1


def _rasterize_numpy(segs, ss, nxs, nys, wrap_x, out):
    if segs.shape[0] == 0:
        return
    t = np.linspace(0.0, 1.0, _RASTER_SAMPLES)
    x = (segs[:, 0, None] + t * (segs[:, 2] - segs[:, 0])[:, None]) * ss
    y = (segs[:, 1, None] + t * (segs[:, 3] - segs[:, 1])[:, None]) * ss
    i = np.floor(x).astype(np.int64)
    j = np.floor(y).astype(np.int64)
    if wrap_x:
        i %= nxs
    else:
        np.clip(i, 0, nxs - 1, out=i)
    j %= nys
    out[i.ravel(), j.ravel()] = 1


def rasterize_segments(segs, ss, nxs, nys, wrap_x, out=None):
    """Mark supersampled cells traversed by segments (index-unit coords).

    Sampling is dense enough that the marked cells form 4-connected chains,
    so 4-connected face fills cannot leak across the curve.
    """
    if out is None:
        out = np.zeros((nxs, nys), np.uint8)
    segs = np.ascontiguousarray(segs, dtype=np.float64)
    if using_numba():
        _rasterize_numba(segs, float(ss), nxs, nys, wrap_x, out)
    else:
        _rasterize_numpy(segs, float(ss), nxs, nys, wrap_x, out)
    return out
