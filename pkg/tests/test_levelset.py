import numpy as np
import pytest

from pblab import levelset, surface
from pblab.errors import DegenerateLevel, GridMismatch


@pytest.fixture(scope="module")
def cos_pair(torus256):
    f = surface.field_from_function(torus256, lambda x, y: np.cos(2 * np.pi * x))
    g = surface.field_from_function(torus256, lambda x, y: np.cos(2 * np.pi * y))
    return f, g


class TestExtract:
    def test_two_vertical_circles(self, cos_pair, torus256):
        f, _ = cos_pair
        c = levelset.extract_level(f, 0.0)
        xs = np.concatenate([c.segs[:, 0], c.segs[:, 2]]) / torus256.nx
        # cos(2 pi x) = 0 at x = 1/4 and 3/4
        near = np.minimum(np.abs(xs - 0.25), np.abs(xs - 0.75))
        assert near.max() < 1.0 / 256
        assert len(c) == 2 * 256

    def test_level_above_max_empty(self, cos_pair):
        f, _ = cos_pair
        assert len(levelset.extract_level(f, 2.0)) == 0

    def test_segment_count_linear_in_resolution(self):
        counts = []
        for res in (64, 128, 256):
            g = surface.make_torus(res, res, 1.0, 1.0)
            f = surface.field_from_function(
                g, lambda x, y: np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
            )
            counts.append(len(levelset.extract_level(f, 0.37)))
        assert counts[1] / counts[0] == pytest.approx(2.0, rel=0.15)
        assert counts[2] / counts[1] == pytest.approx(2.0, rel=0.15)

    def test_chart_coordinates(self, torus256):
        f = surface.field_from_function(torus256, lambda x, y: np.cos(2 * np.pi * x))
        c = levelset.extract_level(f, 0.0)
        chart = c.segments_chart()
        assert chart[:, [0, 2]].max() <= torus256.extent_x + torus256.hx
        assert chart[:, [1, 3]].max() <= torus256.extent_y + torus256.hy

    def test_degenerate_level(self, torus64):
        # a field that occupies every nudge candidate for s = 0.5
        vals = np.zeros(torus64.shape)
        vals[0, 0] = 0.0
        vals[1, :8] = 0.5 + np.arange(8) * 1e-9 * 1.0  # range will be 1
        vals[2, 0] = 1.0
        f = surface.ScalarField(torus64, vals)
        with pytest.raises(DegenerateLevel):
            levelset.extract_level(f, 0.5)


class TestCounting:
    def test_four_crossings(self, cos_pair):
        f, g = cos_pair
        for s, t in [(0.3, -0.4), (0.0, 0.0), (-0.9, 0.77)]:
            assert levelset.count_intersections(f, s, g, t) == 4

    def test_same_field_distinct_levels(self, cos_pair):
        f, _ = cos_pair
        assert levelset.count_intersections(f, 0.3, f, -0.3) == 0

    def test_level_out_of_range(self, cos_pair):
        f, g = cos_pair
        assert levelset.count_intersections(f, 1.7, g, 0.0) == 0

    def test_grid_mismatch(self, cos_pair, torus64):
        f, _ = cos_pair
        h = surface.field_from_function(torus64, lambda x, y: np.cos(2 * np.pi * y))
        with pytest.raises(GridMismatch):
            levelset.count_intersections(f, 0.0, h, 0.0)

    def test_counts_even_generic(self, torus256):
        f = surface.field_from_function(
            torus256, lambda x, y: np.sin(2 * np.pi * (x + y)) * np.cos(2 * np.pi * y)
        )
        g = surface.field_from_function(
            torus256, lambda x, y: np.cos(2 * np.pi * (x - y)) + 0.2 * np.sin(2 * np.pi * x)
        )
        rng = np.random.default_rng(0)
        for _ in range(12):
            s = rng.uniform(-0.8, 0.8)
            t = rng.uniform(-0.9, 0.9)
            assert levelset.count_intersections(f, s, g, t) % 2 == 0


class TestCoarea:
    def test_closed_form_sixteen(self, cos_pair):
        f, g = cos_pair
        rep = levelset.coarea_check(f, g, [(-1.0, 1.0, -1.0, 1.0)], quad=32)
        assert rep.lhs == pytest.approx(16.0, rel=0.02)
        assert rep.rhs == pytest.approx(16.0, rel=0.02)
        assert rep.rel_err <= 0.02
        assert rep.crossing_counts_even

    def test_zero_measure_windows(self, cos_pair):
        f, g = cos_pair
        rep = levelset.coarea_check(
            f, g, [(0.3, 0.3, -1.0, 1.0), (0.1, 0.2, 0.5, 0.5)], quad=8
        )
        assert rep.lhs == 0.0
        assert rep.rhs == 0.0

    def test_window_additivity(self, cos_pair):
        f, g = cos_pair
        whole = levelset.coarea_check(f, g, [(-1.0, 1.0, -1.0, 1.0)], quad=16)
        left = levelset.coarea_check(f, g, [(-1.0, 0.0, -1.0, 1.0)], quad=16)
        right = levelset.coarea_check(f, g, [(0.0, 1.0, -1.0, 1.0)], quad=16)
        assert left.lhs + right.lhs == pytest.approx(whole.lhs, abs=1e-9)

    def test_refinement_improves(self):
        rels = []
        for res in (128, 256):
            g = surface.make_torus(res, res, 1.0, 1.0)
            f = surface.field_from_function(g, lambda x, y: np.cos(2 * np.pi * x))
            h = surface.field_from_function(g, lambda x, y: np.cos(2 * np.pi * y))
            rels.append(levelset.coarea_check(f, h, [(-1, 1, -1, 1)], quad=16).rel_err)
        # non-increasing within 20% of itself
        assert rels[1] <= rels[0] * 1.2

    def test_bump_pair_within_five_percent(self, torus256):
        from pblab import partition

        _, P = partition.sharp_cover(1 / 4, torus256)
        f, g = P.fields[0], P.fields[5]
        lo = 1e-4
        hi_f = float(f.values.max()) * 0.98
        hi_g = float(g.values.max()) * 0.98
        rep = levelset.coarea_check(f, g, [(lo, hi_f, lo, hi_g)], quad=24)
        assert rep.rel_err <= 0.05

    def test_svg_export(self, tmp_path, cos_pair):
        f, g = cos_pair
        cs = [levelset.extract_level(f, 0.0), levelset.extract_level(g, 0.4)]
        p = tmp_path / "contours.svg"
        levelset.contours_svg(cs, str(p))
        text = p.read_text()
        assert text.startswith("<svg") and "path" in text
