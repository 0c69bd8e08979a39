import numpy as np
import pytest

from pblab import surface


@pytest.fixture(scope="session")
def torus64():
    return surface.make_torus(64, 64, 1.0, 1.0)


@pytest.fixture(scope="session")
def torus256():
    return surface.make_torus(256, 256, 1.0, 1.0)


@pytest.fixture(scope="session")
def sphere64():
    return surface.make_sphere(64, 64, 1.0)


@pytest.fixture(scope="session", autouse=True)
def kernel_warmup():
    """Trigger numba compilation on tiny inputs so timed tests stay honest."""
    from pblab import _kernels

    g = surface.make_torus(8, 8, 1.0, 1.0)
    m = np.zeros((8, 8), bool)
    m[2:5, 2:5] = True
    _kernels.label_components(m, True, True, diagonal=False)
    _kernels.label_components(m, True, True, diagonal=True)
    f = surface.field_from_function(g, lambda x, y: np.cos(2 * np.pi * x))
    segs, cells = _kernels.marching_segments(f.values, 0.1, True, True)
    _kernels.count_crossings(segs, cells, segs + 0.01, cells)
    _kernels.rasterize_segments(segs, 4, 32, 32, True)
    _kernels.gram_cube_max(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    counts = np.ones(4, np.int32)
    idx = np.zeros((4, 1), np.int32)
    der = np.ones((4, 1))
    _kernels.bracket_accumulate(counts, idx, der, der, counts, idx, der, der,
                                1.0, 0.1, 1, 1)
    _kernels.pb_upper_scan(counts, idx, der, der, counts, idx, der, der, 1.0)


def disc_mask(grid, cx, cy, r):
    """Round disc mask in chart units, wrap-aware (test helper)."""
    X, Y = grid.coords()
    dx = X - cx
    dy = Y - cy
    if grid.wrap_x:
        dx -= grid.extent_x * np.round(dx / grid.extent_x)
    dy -= grid.extent_y * np.round(dy / grid.extent_y)
    return dx * dx + dy * dy < r * r
