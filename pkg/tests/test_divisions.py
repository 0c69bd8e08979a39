import math

import numpy as np
import pytest

from pblab import cover, divisions, levelset, partition, surface
from pblab.errors import GenericityFailure

from conftest import disc_mask


def radial_field(grid, cx, cy, r0):
    X, Y = grid.coords()
    dx = X - cx - grid.extent_x * np.round((X - cx) / grid.extent_x)
    dy = Y - cy - grid.extent_y * np.round((Y - cy) / grid.extent_y)
    return surface.ScalarField(grid, 1.0 - (dx * dx + dy * dy) / (r0 * r0))


def line_division(grid, xs=(), ys=()):
    segs, cells = [], []
    n = grid.nx
    for x in xs:
        pts = np.stack([np.full(3 * n, x * n), np.linspace(0, n, 3 * n)], axis=1)
        s, c = divisions.polyline_to_cell_segments(pts, grid)
        segs.append(s)
        cells.append(c)
    for y in ys:
        pts = np.stack([np.linspace(0, n, 3 * n), np.full(3 * n, y * n)], axis=1)
        s, c = divisions.polyline_to_cell_segments(pts, grid)
        segs.append(s)
        cells.append(c)
    return divisions.Division(grid, np.concatenate(segs), np.concatenate(cells))


class TestGammaConstruction:
    def test_single_set_full_boundary(self, torus256):
        f = radial_field(torus256, 0.5, 0.5, 0.4)
        cc = divisions.contoured_cover_from_fields([f], [0.3], torus256)
        d = divisions.division_from_cover_order(cc, [0])
        assert len(d) == len(cc.sets[0].segs)
        assert d.total_length() == pytest.approx(
            2 * math.pi * 0.4 * math.sqrt(0.7), rel=0.01
        )

    def test_nested_sets_keep_outer_only(self, torus256):
        outer = radial_field(torus256, 0.5, 0.5, 0.45)
        inner = radial_field(torus256, 0.5, 0.5, 0.45)
        cc = divisions.contoured_cover_from_fields(
            [outer, inner], [0.2, 0.7], torus256
        )
        # alpha = (outer first): the inner boundary sits inside the outer set
        d = divisions.division_from_cover_order(cc, [0, 1])
        assert len(d) == len(cc.sets[0].segs)

    def test_segments_subset_of_boundaries(self, torus256):
        rng = np.random.default_rng(1)
        fields = [radial_field(torus256, rng.uniform(0, 1), rng.uniform(0, 1), 0.5)
                  for _ in range(4)]
        cc = divisions.contoured_cover_from_fields(
            fields, rng.uniform(0.2, 0.5, size=4), torus256
        )
        d = divisions.division_from_cover_order(cc, [2, 0, 3, 1])
        all_cells = np.concatenate([s.cells for s in cc.sets])
        assert np.isin(d.cells, all_cells).all()
        total = sum(
            float(np.hypot(s.segs[:, 2] - s.segs[:, 0],
                           s.segs[:, 3] - s.segs[:, 1]).sum())
            for s in cc.sets
        )
        mine = float(np.hypot(d.segs[:, 2] - d.segs[:, 0],
                              d.segs[:, 3] - d.segs[:, 1]).sum())
        assert mine <= total + 1e-9

    def test_permutations_differ_but_faces_cover(self, torus256):
        f1 = radial_field(torus256, 0.35, 0.5, 0.5)
        f2 = radial_field(torus256, 0.65, 0.5, 0.5)
        cc = divisions.contoured_cover_from_fields([f1, f2], [0.3, 0.3], torus256)
        da = divisions.division_from_cover_order(cc, [0, 1])
        db = divisions.division_from_cover_order(cc, [1, 0])
        assert len(da) != len(db) or not np.allclose(da.segs, db.segs)
        fg = da.fine_grid()
        for d in (da, db):
            covered = d.curve_mask().copy()
            for f in d.faces():
                covered |= f
            assert covered.all()
            total = sum(cover.mask_area(f, fg) for f in d.faces())
            assert total == pytest.approx(
                torus256.total_area - cover.mask_area(d.curve_mask(), fg), rel=1e-12
            )


class TestADivision:
    def test_lattice_cover_boundaries(self, torus256):
        c, P = partition.sharp_cover(1 / 4, torus256)
        ccov = divisions.contoured_cover_from_fields(
            P.fields, [0.08 * (1 + 0.01 * k) for k in range(len(P.fields))], torus256
        )
        rng = np.random.default_rng(0)
        d = divisions.division_from_cover_order(ccov, rng.permutation(16))
        ok, cert = divisions.is_A_division(d, 2.0 / 16.0)
        assert ok, cert

    def test_empty_division_fails(self, torus256):
        d = divisions.Division(torus256, np.empty((0, 4)), np.empty(0, np.int64))
        ok, cert = divisions.is_A_division(d, 0.125)
        assert not ok
        assert cert["enclosing_area"] == math.inf

    def test_certificate_names_big_face(self, torus256):
        d = line_division(torus256, xs=(0.0, 0.5), ys=(0.0,))  # faces are bands
        ok, cert = divisions.is_A_division(d, 0.125)
        assert not ok and cert is not None


class TestTrim:
    def test_disc_faces_unchanged(self, torus256):
        d = divisions.random_disc_division(torus256, 0.125, seed=4)
        t = divisions.trim_to_disc_faces(d)
        assert len(t) == len(d)

    def test_annulus_face_loses_inner_curve(self, torus256):
        from scipy import ndimage

        d = divisions.random_disc_division(torus256, 0.125, seed=4)
        # drop a small circle in the deepest interior of the largest face,
        # carving an annular face whose enclosing disc swallows the circle
        face = max(d.faces(), key=lambda f: f.sum())
        dist = ndimage.distance_transform_edt(face)
        ci, cj = np.unravel_index(int(dist.argmax()), face.shape)
        r_cells = min(float(dist[ci, cj]) / 3.0, 10.0) / divisions.SUPERSAMPLE
        f = radial_field(
            torus256, ci / divisions.SUPERSAMPLE / 256, cj / divisions.SUPERSAMPLE / 256,
            2 * r_cells / 256,
        )
        circle = levelset.extract_level(f, 0.75)  # radius r_cells * h
        assert len(circle) > 0
        segs = np.concatenate([d.segs, circle.segs])
        cells = np.concatenate([d.cells, circle.cells])
        d2 = divisions.Division(torus256, segs, cells, A=d.A)
        t = divisions.trim_to_disc_faces(d2)
        assert len(t) == len(d2) - len(circle)
        t2 = divisions.trim_to_disc_faces(t)
        assert len(t2) == len(t)
        assert t.total_length() <= d2.total_length()
        ok, cert = divisions.is_A_division(t, 0.125)
        assert ok, cert


class TestCrossings:
    def test_transverse_line_systems(self, torus256):
        d1 = line_division(torus256, xs=(0.2, 0.7))
        d2 = line_division(torus256, ys=(0.1, 0.45, 0.8))
        assert divisions.count_division_intersections(d1, d2) == 6

    def test_symmetric(self, torus256):
        d1 = divisions.random_disc_division(torus256, 0.125, seed=10)
        d2 = divisions.random_disc_division(torus256, 0.125, seed=11)
        a = divisions.count_division_intersections(d1, d2)
        b = divisions.count_division_intersections(d2, d1)
        assert a == b

    def test_identical_fails_genericity(self, torus256):
        d = divisions.random_disc_division(torus256, 0.125, seed=12)
        with pytest.raises(GenericityFailure):
            divisions.count_division_intersections(d, d)

    def test_random_pairs_meet_area_bound(self, torus256):
        need = 4  # area / (2A) with A = area/8
        for k in range(6):
            d1 = divisions.random_disc_division(torus256, 0.125, seed=100 + 2 * k)
            d2 = divisions.random_disc_division(torus256, 0.125, seed=101 + 2 * k)
            assert divisions.count_division_intersections(d1, d2) >= need


class TestMaximalFaces:
    def test_coarse_vs_fine_lattice(self, torus256):
        coarse = line_division(torus256, xs=(0.0, 0.5), ys=(0.0, 0.5))
        fine = line_division(
            torus256, xs=(0.01, 0.26, 0.51, 0.76), ys=(0.01, 0.26, 0.51, 0.76)
        )
        m_coarse, m_fine = divisions.maximal_faces(coarse, fine)
        assert len(m_coarse) == 4       # every coarse face is maximal
        assert len(m_fine) == 12        # the 4 fine cells inside a coarse face drop out

    def test_identical_all_maximal(self, torus256):
        d = divisions.random_disc_division(torus256, 0.125, seed=3)
        m1, m2 = divisions.maximal_faces(d, d)
        assert len(m1) == len(d.faces())
        assert len(m2) == len(d.faces())

    def test_union_covers_surface(self, torus256):
        d1 = divisions.random_disc_division(torus256, 0.125, seed=21)
        d2 = divisions.random_disc_division(torus256, 0.125, seed=22)
        m1, m2 = divisions.maximal_faces(d1, d2)
        fg = d1.fine_grid()
        un = np.zeros(fg.shape, bool)
        for f in m1 + m2:
            un |= f
        assert un.mean() >= 0.99

    def test_dominant_side_boundaries_cross_twice(self, torus256):
        d1 = divisions.random_disc_division(torus256, 0.125, seed=31)
        d2 = divisions.random_disc_division(torus256, 0.125, seed=32)
        m1, m2 = divisions.maximal_faces(d1, d2)
        fg = d1.fine_grid()
        area1 = sum(cover.mask_area(f, fg) for f in m1)
        area2 = sum(cover.mask_area(f, fg) for f in m2)
        dom, other, faces = (d1, d2, m1) if area1 >= area2 else (d2, d1, m2)
        for face in faces:
            segs, cells = divisions.face_boundary_segments(dom, face)
            order = np.argsort(cells, kind="stable")
            n, _ = divisions._kernels.count_crossings(
                segs[order], cells[order], other.segs, other.cells
            )
            assert n >= 2


class TestThresholdCovers:
    def test_constant_partition_multiplicity(self, torus64):
        c = cover.Cover([cover.CoverSet(torus64, np.ones(torus64.shape, bool), 0)])
        P = partition.PartitionOfUnity(
            fields=[surface.constant_field(torus64, 1.0)], cover=c
        )
        tc = divisions.threshold_covers(P, L=4, seed=0)
        assert len(tc) == 4
        assert int(tc.multiplicity().min()) == 4

    def test_bump_partition_multiplicity(self, torus256):
        _, P = partition.sharp_cover(1 / 4, torus256)
        L = 32
        tc = divisions.threshold_covers(P, L=L, seed=1)
        assert int(tc.multiplicity().min()) >= L - len(P.fields)

    def test_bound_factor_tends_to_one(self):
        nI = nJ = 4
        factors = [(L - nI - nJ) ** 2 / L**2 for L in (16, 64, 256)]
        assert factors == sorted(factors)
        assert factors[-1] > 0.93

    def test_needs_enough_levels(self, torus256):
        _, P = partition.sharp_cover(1 / 4, torus256)
        with pytest.raises(ValueError):
            divisions.threshold_covers(P, L=16, seed=0)


class TestPermutationExperiment:
    def _dup_cap_cover(self, grid, L):
        m1 = np.zeros(grid.shape, bool)
        m2 = np.zeros(grid.shape, bool)
        m1[:40, :] = True
        m2[24:, :] = True
        sets = []
        for _ in range(L):
            sets.append(cover.CoverSet(grid, m1, id=len(sets)))
            sets.append(cover.CoverSet(grid, m2, id=len(sets)))
        return cover.Cover(sets)

    @pytest.mark.parametrize("L", [4, 8])
    def test_duplicated_caps_survival(self, sphere64, L):
        c = self._dup_cap_cover(sphere64, L)
        rep = divisions.permutation_average_experiment(c, c, L, samples=600, seed=2)
        assert rep.survival_expected == pytest.approx(1.0 / (L + 1), abs=1e-12)
        assert abs(rep.survival_freq - 1.0 / (L + 1)) <= 3.0 * rep.survival_sigma

    def test_single_sample_crossing(self, torus256):
        _, P = partition.sharp_cover(1 / 2, torus256)
        ccu = divisions.contoured_threshold_cover(P, L=8, seed=3)
        ccv = divisions.contoured_threshold_cover(P, L=8, seed=4)
        rep = divisions.permutation_average_experiment(
            ccu, ccv, L=4, samples=10, seed=0, crossing_samples=1
        )
        assert rep.crossing_samples + rep.genericity_failures == 1
        if rep.crossing_samples:
            assert rep.mean_crossings == int(rep.mean_crossings)

    def test_threshold_crossings_meet_bound(self, torus256):
        c, P = partition.sharp_cover(1 / 2, torus256)
        L = 8
        ccu = divisions.contoured_threshold_cover(P, L=L, seed=5)
        ccv = divisions.contoured_threshold_cover(P, L=L, seed=6)
        hatL = L - 2 * len(P.fields)
        A = max(cover.set_energy(s.mask, torus256) for s in c.sets)
        rep = divisions.permutation_average_experiment(
            ccu, ccv, L=hatL, samples=10, seed=1, crossing_samples=4
        )
        assert rep.crossing_samples > 0
        assert rep.mean_crossings >= torus256.total_area / (2 * A)
