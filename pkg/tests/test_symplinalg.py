import math

import numpy as np
import pytest

from pblab import symplinalg as sl
from pblab.errors import (
    CoverageUncertified,
    RankAmbiguous,
    RequiresSpanning,
)

from oracles import brute_cube_max


def e(n, k):
    v = np.zeros(2 * n)
    v[k] = 1.0
    return v


class TestForm:
    def test_darboux_pairing(self):
        assert sl.omega0(e(2, 0), e(2, 1)) == 1.0    # w(q1, p1) = 1
        assert sl.omega0(e(2, 0), e(2, 2)) == 0.0    # w(q1, q2) = 0
        assert sl.omega0(e(2, 1), e(2, 3)) == 0.0

    def test_alternating(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            u = rng.standard_normal(6)
            assert sl.omega0(u, u) == 0.0

    def test_J0_properties(self):
        rng = np.random.default_rng(1)
        u = rng.standard_normal((20, 4))
        v = rng.standard_normal((20, 4))
        assert np.abs(sl.apply_J0(sl.apply_J0(u)) + u).max() == 0.0
        lhs = (sl.apply_J0(u) * sl.apply_J0(v)).sum(axis=1)
        rhs = (u * v).sum(axis=1)
        assert np.abs(lhs - rhs).max() < 1e-14
        # w(u, v) = <u, J0 v>
        J = sl.J0_matrix(2)
        got = sl.omega0(u[0], v[0])
        assert got == pytest.approx(float(u[0] @ J @ v[0]), abs=1e-15)

    def test_gram_antisymmetric(self):
        rng = np.random.default_rng(2)
        vs = sl.random_vector_set(rng, 3, 7)
        assert np.abs(vs.gram + vs.gram.T).max() < 1e-12


class TestCubeMax:
    def test_standard_pair(self):
        vs = sl.SympVectorSet(n=1, vectors=np.array([[1.0, 0.0], [0.0, 1.0]]))
        v, x, y = sl.max_bilinear_cube(vs)
        assert v == 2.0
        assert float(x @ vs.gram @ y) == pytest.approx(2.0, abs=1e-15)

    def test_omega_orthogonal_vectors(self):
        vs = sl.SympVectorSet(
            n=2, vectors=np.array([e(2, 0), e(2, 2), 2.0 * e(2, 0) + e(2, 2)])
        )
        v, _, _ = sl.max_bilinear_cube(vs)
        assert v == 0.0

    def test_copies_of_one_vector(self):
        vs = sl.SympVectorSet(n=1, vectors=np.tile([[1.0, 2.0]], (5, 1)))
        v, _, _ = sl.max_bilinear_cube(vs)
        assert v == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_double_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(1, 9))
        vs = sl.random_vector_set(rng, int(rng.integers(1, 4)), N)
        v, x, y = sl.max_bilinear_cube(vs)
        assert v == pytest.approx(brute_cube_max(vs.gram), abs=1e-12)
        assert float(x @ vs.gram @ y) == pytest.approx(v, rel=1e-12)

    def test_exact_limit_enforced(self):
        rng = np.random.default_rng(0)
        vs = sl.random_vector_set(rng, 1, 25)
        with pytest.raises(ValueError):
            sl.max_bilinear_cube(vs)
        v, x, y = sl.max_bilinear_cube(vs, heuristic=True)
        assert v > 0
        assert v == pytest.approx(float(np.abs(vs.gram.T @ x).sum()), rel=1e-12)


class TestCorollaryRatio:
    def test_standard_pair_ratio_one(self):
        vs = sl.SympVectorSet(n=1, vectors=np.array([[1.0, 0.0], [0.0, 1.0]]))
        r = sl.corollary_ratio(vs)
        assert (r.max_bilinear, r.sum_abs_gram, r.ratio) == (2.0, 2.0, 1.0)

    def test_zero_gram_vacuous(self):
        vs = sl.SympVectorSet(n=2, vectors=np.array([e(2, 0), e(2, 2)]))
        r = sl.corollary_ratio(vs)
        assert r.vacuous

    def test_random_batch_above_constant(self):
        rng = np.random.default_rng(3)
        c = sl.proof_constant(1, math.pi / 30)
        worst = math.inf
        for _ in range(300):
            vs = sl.random_vector_set(rng, 1, int(rng.integers(2, 11)))
            r = sl.corollary_ratio(vs)
            if not r.vacuous:
                worst = min(worst, r.ratio)
        assert worst >= c
        assert worst < 1.0  # the bound is not vacuous for the batch


class TestReduce:
    def test_symplectic_span_unchanged(self):
        rng = np.random.default_rng(4)
        vs = sl.random_vector_set(rng, 2, 6)  # generic: span is symplectic
        out = sl.symplectic_reduce(vs)
        assert np.abs(out.vectors - vs.vectors).max() < 1e-12

    def test_single_vector_killed(self):
        vs = sl.SympVectorSet(n=2, vectors=np.array([[2.0, 1.0, 0.5, -0.3]]))
        out = sl.symplectic_reduce(vs)
        assert np.abs(out.vectors).max() < 1e-12

    def test_mixed_span(self):
        vs = sl.SympVectorSet(n=2, vectors=np.array([e(2, 0), e(2, 1), e(2, 2)]))
        out = sl.symplectic_reduce(vs)
        assert np.abs(out.vectors[0] - e(2, 0)).max() < 1e-12
        assert np.abs(out.vectors[1] - e(2, 1)).max() < 1e-12
        assert np.abs(out.vectors[2]).max() < 1e-12
        assert np.abs(out.gram - vs.gram).max() < 1e-10

    def test_gram_preserved_random(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            base = sl.random_vector_set(rng, 3, 2)  # rank-2 span, usually isotropic bits
            vs = sl.SympVectorSet(
                n=3,
                vectors=np.vstack([base.vectors, base.vectors.sum(0, keepdims=True)]),
            )
            out = sl.symplectic_reduce(vs)
            assert np.abs(out.gram - vs.gram).max() < 1e-9

    def test_output_span_symplectic(self):
        rng = np.random.default_rng(6)
        vs = sl.SympVectorSet(
            n=2,
            vectors=np.array([e(2, 0), e(2, 1), e(2, 0) + e(2, 2), e(2, 2)]),
        )
        out = sl.symplectic_reduce(vs)
        # restricted form on the output span must be nondegenerate
        V = out.vectors
        _, s, Vt = np.linalg.svd(V, full_matrices=False)
        B = Vt[: int((s > 1e-9 * s[0]).sum())].T
        om = B.T @ sl.J0_matrix(2) @ B
        sv = np.linalg.svd(om, compute_uv=False)
        assert sv.min() > 1e-9


class TestConeCover:
    def test_circle_count(self):
        cc = sl.cone_cover(1, math.pi / 30, samples=200_000)
        assert cc.m == 30
        assert cc.certified and cc.margin >= 0

    def test_m_decreases_with_theta(self):
        m_small = sl.cone_cover(1, math.pi / 30, samples=10_000).m
        m_big = sl.cone_cover(1, 0.7, samples=10_000).m
        assert m_big < m_small

    def test_membership_certificate(self):
        cc = sl.cone_cover(1, 0.3, samples=50_000)
        ang = np.linspace(0, 2 * math.pi, 1000, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        best = (dirs @ cc.centers.T).max(axis=1)
        assert (best >= math.cos(0.3) - 1e-12).all()

    def test_higher_dimension_greedy(self):
        cc = sl.cone_cover(2, 0.6, samples=100_000)
        assert cc.certified
        dirs = sl._sphere_samples(4, 20_000)
        best = (dirs @ cc.centers.T).max(axis=1)
        assert (best >= math.cos(0.6) - 1e-12).all()

    def test_cap_uncertified(self):
        with pytest.raises(CoverageUncertified):
            sl.cone_cover(2, 0.15, samples=50_000, max_centers=10)

    def test_theta_domain(self):
        with pytest.raises(ValueError):
            sl.cone_cover(1, 1.0)


class TestMaxCone:
    def test_all_in_one_cone(self):
        cc = sl.cone_cover(1, 0.3, samples=10_000)
        z = cc.centers[5]
        vs = sl.SympVectorSet(n=1, vectors=np.vstack([2 * z, 3 * z]))
        assert sl.max_cone(vs, cc) == 5

    def test_tie_lowest_index(self):
        cc = sl.cone_cover(1, 0.3, samples=10_000)
        vs = sl.SympVectorSet(
            n=1, vectors=np.vstack([cc.centers[2], cc.centers[7]])
        )
        j = sl.max_cone(vs, cc)
        assert j == min(
            k for k in range(cc.m)
            if sl.cone_norm_sum(vs, cc, k) == sl.cone_norm_sum(vs, cc, j)
        )

    def test_pigeonhole(self):
        rng = np.random.default_rng(7)
        cc = sl.cone_cover(1, math.pi / 30, samples=10_000)
        for _ in range(20):
            vs = sl.random_vector_set(rng, 1, 12)
            j = sl.max_cone(vs, cc)
            assert sl.cone_norm_sum(vs, cc, j) >= vs.norm_sum() / cc.m - 1e-12


class TestShear:
    def test_axis_halved(self):
        v = np.array([1.0, 0.0, 0.0, 0.0])
        S = sl.shear_map(v)
        assert np.linalg.norm(sl.apply_map(S, v)) == pytest.approx(0.5)

    def test_J0_axis_doubled(self):
        v = np.array([0.0, 0.0, 1.0, 0.0])
        S = sl.shear_map(v)
        assert np.linalg.norm(sl.apply_map(S, sl.apply_J0(v))) == pytest.approx(2.0)

    def test_orthogonal_complement_fixed(self):
        v = np.array([1.0, 0.0, 0.0, 0.0])
        S = sl.shear_map(v)
        w = np.array([0.0, 0.0, 0.3, -0.7])
        assert np.abs(sl.apply_map(S, w) - w).max() < 1e-15

    def test_battery(self):
        rng = np.random.default_rng(8)
        for n in (1, 2, 3):
            v = rng.standard_normal(2 * n)
            v /= np.linalg.norm(v)
            S = sl.shear_map(v)
            assert sl.symplectic_defect(S, n) < 1e-10
            U = rng.standard_normal((50_000, 2 * n))
            growth = np.linalg.norm(U @ S.T, axis=1) - np.linalg.norm(U, axis=1)
            bound = 3.0 * np.abs(sl.omega0(U, np.broadcast_to(v, U.shape)))
            assert (growth <= bound + 1e-10).all()

    def test_cone_contraction(self):
        rng = np.random.default_rng(9)
        theta = math.pi / 30
        for n in (1, 2):
            v = rng.standard_normal(2 * n)
            v /= np.linalg.norm(v)
            S = sl.shear_map(v)
            phi = rng.uniform(0, 2 * theta, 20_000)
            W = rng.standard_normal((20_000, 2 * n))
            W -= (W @ v)[:, None] * v
            nw = np.linalg.norm(W, axis=1)
            nw[nw == 0] = 1.0
            U = np.cos(phi)[:, None] * v + np.sin(phi)[:, None] * (W / nw[:, None])
            assert np.linalg.norm(U @ S.T, axis=1).max() <= 2.0 / 3.0 + 1e-12


class TestProofConstant:
    def test_value_at_pi_over_30(self):
        want = math.sqrt(math.cos(math.pi / 30)) / 8100.0
        assert sl.proof_constant(1, math.pi / 30) == pytest.approx(want, rel=1e-15)
        assert want == pytest.approx(1.23118e-4, rel=1e-4)

    def test_monotone_toward_validity_edge(self):
        c_small = sl.proof_constant(1, math.pi / 60)
        c_edge = sl.proof_constant(1, math.pi / 30)
        assert c_small < c_edge

    def test_positive(self):
        for theta in (0.01, 0.05, math.pi / 30):
            assert sl.proof_constant(1, theta) > 0

    def test_domain(self):
        with pytest.raises(ValueError):
            sl.proof_constant(1, 0.5)


class TestMinimize:
    def test_symmetric_frame_stationary(self):
        vs = sl.SympVectorSet(
            n=1, vectors=np.array([[1.0, 0], [0, 1.0], [-1.0, 0], [0, -1.0]])
        )
        res = sl.minimize_over_sp(vs, steps=60, seed=0, restarts=4)
        assert res.objective == pytest.approx(4.0, abs=1e-8)
        assert res.objective <= res.initial

    def test_anisotropic_improves(self):
        vs = sl.SympVectorSet(n=1, vectors=np.array([[4.0, 0.0], [0.0, 1.0]]))
        res = sl.minimize_over_sp(vs, steps=80, seed=0, restarts=4)
        assert res.objective < res.initial
        assert res.objective == pytest.approx(4.0, abs=1e-3)  # 4s + 1/s at s=1/2

    def test_output_symplectic(self):
        rng = np.random.default_rng(10)
        for n in (1, 2):
            vs = sl.random_vector_set(rng, n, 2 * n + 1)
            res = sl.minimize_over_sp(vs, steps=30, seed=1, restarts=2)
            assert res.defect < 1e-8
            assert res.objective <= res.initial + 1e-12

    def test_requires_spanning(self):
        vs = sl.SympVectorSet(n=2, vectors=np.array([e(2, 0), e(2, 1)]))
        with pytest.raises(RequiresSpanning):
            sl.minimize_over_sp(vs)

    def test_chain_inequality_after_normalization(self):
        # after descent + shear polish, the norm mass of the best cone obeys
        # (sum_C ||v||)^2 <= (9/sqrt(cos t)) * cube max
        rng = np.random.default_rng(11)
        theta = math.pi / 30
        cc = sl.cone_cover(1, theta, samples=10_000)
        Abound = 9.0 / math.sqrt(math.cos(theta))
        for k in range(15):
            vs = sl.random_vector_set(rng, 1, int(rng.integers(2, 9)))
            res = sl.minimize_over_sp(vs, steps=50, seed=k, restarts=3)
            cur = sl.SympVectorSet(n=1, vectors=vs.vectors @ res.S.T)
            j = sl.max_cone(cur, cc)
            s_c = sl.cone_norm_sum(cur, cc, j)
            mb, _, _ = sl.max_bilinear_cube(cur)
            assert s_c**2 <= Abound * mb + 1e-9


class TestRankAmbiguity:
    def test_ambiguous_span(self):
        v = np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 1e-9 * 0.5, 0.0, 0.0]])
        with pytest.raises(RankAmbiguous):
            sl.symplectic_reduce(sl.SympVectorSet(n=2, vectors=v))
