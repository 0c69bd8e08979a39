"""The numba kernels and the numpy fallbacks must agree on everything."""

import numpy as np
import pytest

from pblab import _kernels, surface
from pblab._backend import HAVE_NUMBA, get_backend, set_backend

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba missing")


@pytest.fixture
def both_backends():
    yield
    set_backend(None)


def run_both(fn):
    set_backend("numba")
    a = fn()
    set_backend("numpy")
    b = fn()
    set_backend(None)
    return a, b


class TestParity:
    def test_labels_identical(self, torus64):
        rng = np.random.default_rng(0)
        for density in (0.2, 0.5, 0.8):
            m = rng.random(torus64.shape) < density
            for diag in (False, True):
                (la, na), (lb, nb) = run_both(
                    lambda: _kernels.label_components(m, True, True, diag)
                )
                assert na == nb
                assert np.array_equal(la, lb)

    def test_labels_identical_sphere_topology(self):
        rng = np.random.default_rng(1)
        m = rng.random((40, 40)) < 0.45
        (la, na), (lb, nb) = run_both(
            lambda: _kernels.label_components(m, False, True, False)
        )
        assert na == nb and np.array_equal(la, lb)

    def test_marching_identical(self, torus64):
        f = surface.field_from_function(
            torus64, lambda x, y: np.cos(2 * np.pi * x) * np.sin(4 * np.pi * y)
        )
        for level in (-0.7, 0.001, 0.5):
            (sa, ca), (sb, cb) = run_both(
                lambda: _kernels.marching_segments(f.values, level, True, True)
            )
            assert np.array_equal(ca, cb)
            # same cells; segment order inside a cell may differ for saddles
            assert sa.shape == sb.shape
            assert np.allclose(np.sort(sa, axis=0), np.sort(sb, axis=0), atol=1e-14)

    def test_crossings_identical(self, torus64):
        f = surface.field_from_function(
            torus64, lambda x, y: np.cos(2 * np.pi * (x + y))
        )
        g = surface.field_from_function(
            torus64, lambda x, y: np.sin(2 * np.pi * (x - 2 * y))
        )
        sa, ca = _kernels.marching_segments(f.values, 0.13, True, True)
        sb, cb = _kernels.marching_segments(g.values, -0.21, True, True)
        ra, rb = run_both(lambda: _kernels.count_crossings(sa, ca, sb, cb))
        assert ra == rb

    def test_bracket_accumulate_close(self, torus64):
        from pblab import _slots, partition

        _, P = partition.sharp_cover(1 / 2, torus64)
        slots = _slots.build_node_slots([f.values for f in P.fields], torus64)
        (l1a, supa, sna), (l1b, supb, snb) = run_both(
            lambda: _kernels.bracket_accumulate(
                *slots, *slots, 1.0, torus64.cell_area, 4, 4
            )
        )
        assert np.allclose(l1a, l1b, rtol=1e-12)
        assert np.allclose(supa, supb, rtol=1e-12)
        assert np.allclose(sna, snb, rtol=1e-12)

    def test_pb_scan_equal(self, torus64):
        from pblab import _slots, partition

        _, P = partition.sharp_cover(1 / 2, torus64)
        slots = _slots.build_node_slots([f.values for f in P.fields], torus64)
        (va, ea), (vb, eb) = run_both(
            lambda: _kernels.pb_upper_scan(*slots, *slots, 1.0)
        )
        assert ea and eb
        assert va == pytest.approx(vb, rel=1e-12)

    def test_gray_max_equal(self):
        rng = np.random.default_rng(2)
        for N in (1, 2, 5, 11):
            V = rng.standard_normal((N, 4))
            J = np.zeros((4, 4))
            J[0, 1] = J[2, 3] = 1.0
            J[1, 0] = J[3, 2] = -1.0
            A = V @ J @ V.T
            (va, xa, ya), (vb, xb, yb) = run_both(lambda: _kernels.gram_cube_max(A))
            assert va == pytest.approx(vb, rel=1e-13)
            assert float(xa @ A @ ya) == pytest.approx(va, rel=1e-12)
            assert float(xb @ A @ yb) == pytest.approx(vb, rel=1e-12)

    def test_rasterize_identical(self, torus64):
        f = surface.field_from_function(
            torus64, lambda x, y: np.cos(2 * np.pi * x) + np.sin(2 * np.pi * y)
        )
        segs, _ = _kernels.marching_segments(f.values, 0.4, True, True)
        ma, mb = run_both(
            lambda: _kernels.rasterize_segments(segs, 4, 256, 256, True)
        )
        assert np.array_equal(ma, mb)

    def test_env_var_selects_backend(self, monkeypatch):
        set_backend(None)
        monkeypatch.setenv("PBLAB_BACKEND", "numpy")
        assert get_backend() == "numpy"
        monkeypatch.setenv("PBLAB_BACKEND", "numba")
        assert get_backend() == "numba"
        monkeypatch.setenv("PBLAB_BACKEND", "garbage")
        with pytest.raises(RuntimeError):
            get_backend()

    def test_end_to_end_coarea_parity(self, torus64):
        from pblab import levelset

        f = surface.field_from_function(torus64, lambda x, y: np.cos(2 * np.pi * x))
        g = surface.field_from_function(torus64, lambda x, y: np.cos(2 * np.pi * y))
        ra, rb = run_both(
            lambda: levelset.coarea_check(f, g, [(-1, 1, -1, 1)], quad=8)
        )
        assert ra.lhs == rb.lhs
        assert ra.rhs == rb.rhs
