#!/usr/bin/env python3
"""Benchmark the numba kernels against the numpy/scipy fallbacks.

Runs every hot kernel on representative workloads under both backends and
prints a speedup table.  Select one backend only via PBLAB_BACKEND; by
default both are timed in-process.

    python3 benchmarks/bench_backends.py [--repeat 5] [--size 512]
"""

import argparse
import time

import numpy as np

from pblab import _kernels, _slots, partition, surface
from pblab._backend import HAVE_NUMBA, set_backend


def timeit(fn, repeat):
    fn()  # warmup (JIT compile / cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(size):
    rng = np.random.default_rng(0)
    g = surface.make_torus(size, size, 1.0, 1.0)
    blobs = rng.random((size, size)) < 0.5
    f = surface.field_from_function(
        g, lambda x, y: np.cos(2 * np.pi * x) * np.cos(4 * np.pi * y)
    )
    h = surface.field_from_function(
        g, lambda x, y: np.sin(2 * np.pi * (x + y))
    )
    segs_f, cells_f = _kernels.marching_segments(f.values, 0.1, True, True)
    segs_h, cells_h = _kernels.marching_segments(h.values, -0.2, True, True)
    gp = surface.make_torus(max(128, size // 2), max(128, size // 2), 1.0, 1.0)
    _, P = partition.sharp_cover(1 / 8, gp)
    slots = _slots.build_node_slots([x.values for x in P.fields], gp)
    A = rng.standard_normal((20, 4))
    J = np.zeros((4, 4))
    J[0, 1] = J[2, 3] = 1.0
    J[1, 0] = J[3, 2] = -1.0
    gram = A @ J @ A.T

    return {
        "label_components": lambda: _kernels.label_components(blobs, True, True),
        "marching_squares(x32)": lambda: [
            _kernels.marching_segments(f.values, s, True, True)
            for s in np.linspace(-0.9, 0.9, 32)
        ],
        "crossing_count": lambda: _kernels.count_crossings(
            segs_f, cells_f, segs_h, cells_h
        ),
        "bracket_accumulate": lambda: _kernels.bracket_accumulate(
            *slots, *slots, 1.0, gp.cell_area, 64, 64
        ),
        "pb_upper_scan": lambda: _kernels.pb_upper_scan(*slots, *slots, 1.0),
        "gram_cube_max(N=20)": lambda: _kernels.gram_cube_max(gram),
        "rasterize_segments": lambda: _kernels.rasterize_segments(
            segs_f, 4, 4 * size, 4 * size, True
        ),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()

    if not HAVE_NUMBA:
        raise SystemExit("numba not importable; nothing to compare")

    work = workloads(args.size)
    rows = []
    for name, fn in work.items():
        set_backend("numba")
        t_nb = timeit(fn, args.repeat)
        set_backend("numpy")
        t_np = timeit(fn, args.repeat)
        set_backend(None)
        rows.append((name, t_nb * 1e3, t_np * 1e3, t_np / t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba ms':>10}  {'numpy ms':>10}  {'speedup':>8}")
    for name, nb, npms, sp in rows:
        print(f"{name:<{width}}  {nb:>10.2f}  {npms:>10.2f}  {sp:>7.1f}x")


if __name__ == "__main__":
    main()
