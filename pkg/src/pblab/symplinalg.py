"""Standard symplectic linear algebra and the hypercube maximisation bound.

The chain of facts implemented and verified here, for vectors v_1..v_N in
standard symplectic R^{2n} (coordinates q_1, p_1, ..., q_n, p_n):

* the bilinear form max_{x,y in [-1,1]^N} w0(sum x_i v_i, sum y_j v_j) is
  attained at sign vectors and equals max_x ||A^T x||_1 for the Gram
  matrix A_ij = w0(v_i, v_j) — computed exactly by enumeration;
* cones of half-angle theta covering R^{2n}, a cone C of maximal norm sum,
  and the shear S(av + bJ0v + w) = a/2 v + 2b J0 v + w built from the
  normalized sum v of the vectors in C.  The shear is symplectic, obeys
  ||Su|| - ||u|| <= 3 |w0(u, v)| everywhere and ||Su|| <= (2/3)||u|| on a
  2*theta-neighbourhood of v once theta <= pi/30;
* for norm-sum-minimizing configurations this yields
  (sum_{v in C} ||v||)^2 <= (9/sqrt(cos theta)) * cube-max, and with
  m(n, theta) covering cones the explicit dimension constant
  c = 1 / (m^2 * 9 / sqrt(cos theta)) relating cube-max to the total
  Gram mass sum |A_ij|.

Norm-sum minimization over Sp(2n) is heuristic (Lie-algebra descent with
shear polishing); its verified contract is only that the output does not
exceed the input norm sum and stays symplectic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import ndtri
from scipy.stats import qmc

from ._kernels import gram_cube_max
from .errors import CoverageUncertified, RankAmbiguous, RequiresSpanning

MAX_EXACT_N = 24
RANK_TOL = 1e-9
SHEAR_VALID_THETA = math.pi / 30.0  # the small-angle regime the 2/3 bound needs


def J0_matrix(n: int) -> np.ndarray:
    """The matrix with w0(u, v) = u^T J0 v;  J0 q_k = -p_k, J0 p_k = q_k."""
    J = np.zeros((2 * n, 2 * n))
    for k in range(n):
        J[2 * k, 2 * k + 1] = 1.0
        J[2 * k + 1, 2 * k] = -1.0
    return J


def apply_J0(u: np.ndarray) -> np.ndarray:
    """J0 u for one vector or a batch (..., 2n); J0^2 = -Id, orthogonal."""
    out = np.empty_like(u)
    out[..., 0::2] = u[..., 1::2]
    out[..., 1::2] = -u[..., 0::2]
    return out


def omega0(u: np.ndarray, v: np.ndarray) -> float | np.ndarray:
    """Standard symplectic form, bilinear and antisymmetric."""
    s = u[..., 0::2] * v[..., 1::2] - u[..., 1::2] * v[..., 0::2]
    out = s.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class SympVectorSet:
    """N vectors in R^{2n} with their antisymmetric Gram matrix."""

    n: int
    vectors: np.ndarray           # (N, 2n)
    gram: np.ndarray = None       # filled from the vectors

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != 2 * self.n:
            raise ValueError(
                f"expected shape (N, {2 * self.n}), got {self.vectors.shape}"
            )
        self.gram = self.vectors @ J0_matrix(self.n) @ self.vectors.T
        assert float(np.abs(self.gram + self.gram.T).max()) <= 1e-12 * (
            1.0 + float(np.abs(self.gram).max())
        )

    @property
    def N(self) -> int:
        return self.vectors.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)

    def norm_sum(self) -> float:
        return float(self.norms().sum())


def max_bilinear_cube(vs: SympVectorSet, heuristic: bool = False,
                      starts: int = 32, seed: int = 0):
    """Exact max over the sign hypercube of w0(sum x_i v_i, sum y_j v_j).

    Bilinearity puts the maximum at cube vertices; for fixed x the best y
    gives ||A^T x||_1, and x is enumerated (2^(N-1) work, N <= 24).  For
    larger N pass heuristic=True for seeded alternating ascent, which
    returns a certified lower value.
    """
    N = vs.N
    if N <= MAX_EXACT_N:
        return gram_cube_max(vs.gram)
    if not heuristic:
        raise ValueError(f"N={N} exceeds exact limit {MAX_EXACT_N}; "
                         "pass heuristic=True")
    A = vs.gram
    rng = np.random.default_rng(seed)
    best, bx, by = -1.0, None, None
    for _ in range(starts):
        y = rng.choice([-1.0, 1.0], size=N)
        for _ in range(16):
            x = np.sign(A @ y)
            x[x == 0] = 1.0
            y = np.sign(A.T @ x)
            y[y == 0] = 1.0
        v = float(np.abs(A.T @ x).sum())
        if v > best:
            best, bx, by = v, x, np.sign(A.T @ x)
            by[by == 0] = 1.0
    return best, bx, by


@dataclass
class CorollaryRatio:
    max_bilinear: float
    sum_abs_gram: float
    ratio: float          # inf when the Gram matrix vanishes (vacuous)

    @property
    def vacuous(self) -> bool:
        return not math.isfinite(self.ratio)


def corollary_ratio(vs: SympVectorSet) -> CorollaryRatio:
    """Cube max over total Gram mass; bounded below by proof_constant."""
    v, _, _ = max_bilinear_cube(vs)
    s = float(np.abs(vs.gram).sum())
    ratio = v / s if s > 0 else math.inf
    return CorollaryRatio(max_bilinear=v, sum_abs_gram=s, ratio=ratio)


def symplectic_reduce(vs: SympVectorSet) -> SympVectorSet:
    """Project the vectors along the radical of the form on their span.

    The span decomposes as a symplectically orthogonal sum of a symplectic
    subspace and an isotropic one (the radical); projecting onto the
    symplectic part preserves every pairwise form value, so the Gram
    matrix is unchanged while the output span is symplectic.
    """
    V = vs.vectors
    norm_scale = float(np.abs(V).max())
    if norm_scale == 0.0:
        return SympVectorSet(n=vs.n, vectors=V.copy())
    _, s, Vt = np.linalg.svd(V, full_matrices=False)
    smax = s[0]
    ambiguous = (s > RANK_TOL * smax * 0.1) & (s < RANK_TOL * smax * 10.0)
    if ambiguous.any():
        raise RankAmbiguous("span rank sits at the tolerance boundary")
    r = int((s > RANK_TOL * smax).sum())
    B = Vt[:r].T                                 # orthonormal span basis, (2n, r)
    omega_r = B.T @ J0_matrix(vs.n) @ B          # restricted form
    if r == 0:
        return SympVectorSet(n=vs.n, vectors=np.zeros_like(V))
    w, sw, wt = np.linalg.svd(omega_r)
    swmax = sw[0] if sw.size else 0.0
    if swmax <= RANK_TOL:
        k = r                                    # fully isotropic span
        K = np.eye(r)
    else:
        amb = (sw > RANK_TOL * swmax * 0.1) & (sw < RANK_TOL * swmax * 10.0)
        if amb.any():
            raise RankAmbiguous("radical rank sits at the tolerance boundary")
        rank_w = int((sw > RANK_TOL * swmax).sum())
        k = r - rank_w
        K = wt[rank_w:].T                        # orthonormal radical basis, (r, k)
    if k == 0:
        return SympVectorSet(n=vs.n, vectors=V.copy())
    P = B @ (np.eye(r) - K @ K.T) @ B.T
    out = SympVectorSet(n=vs.n, vectors=V @ P.T)
    assert float(np.abs(out.gram - vs.gram).max()) <= 1e-10 * (1.0 + norm_scale**2)
    return out


# ---------------------------------------------------------------------------
# cone covers
# ---------------------------------------------------------------------------


@dataclass
class ConeCover:
    """Closed cones {u : <u, z_j> >= cos(theta) ||u||} covering R^{2n}."""

    n: int
    theta: float
    centers: np.ndarray     # (m, 2n) unit vectors
    margin: float           # min over test directions of best dot - cos(theta)
    certified: bool

    @property
    def m(self) -> int:
        return self.centers.shape[0]


def _sphere_samples(dim: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy directions on S^{dim-1}."""
    eng = qmc.Sobol(d=dim, scramble=False)
    eng.fast_forward(8)                      # skip the degenerate first points
    u = eng.random(count)
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    nrm = np.linalg.norm(z, axis=1)
    nrm[nrm == 0] = 1.0
    return z / nrm[:, None]


def cone_cover(n: int, theta: float, samples: int = 1_000_000,
               max_centers: int = 2000) -> ConeCover:
    """A covering family of theta-cones of R^{2n}.

    For 2n = 2 the construction is exact (equally spaced arcs); for
    2n in {4, 6} centers grow greedily (farthest uncovered direction)
    until all sampled unit vectors land in some cone, which is the
    coverage certificate.  Raises CoverageUncertified at the cap.
    """
    if not 0.0 < theta < math.pi / 4:
        raise ValueError(f"theta must lie in (0, pi/4), got {theta}")
    if n == 1:
        m = math.ceil(math.pi / theta)
        ang = 2.0 * math.pi * np.arange(m) / m
        centers = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        sweep = 2.0 * math.pi * np.arange(samples) / samples
        dirs = np.stack([np.cos(sweep), np.sin(sweep)], axis=1)
        best = (dirs @ centers.T).max(axis=1)
        margin = float(best.min()) - math.cos(theta)
        if margin < -1e-12:
            raise CoverageUncertified("arc construction failed the sweep")
        return ConeCover(n=n, theta=theta, centers=centers,
                         margin=margin, certified=True)
    if n not in (2, 3):
        raise ValueError("cone covers are implemented for 2n in {2, 4, 6}")
    dirs = _sphere_samples(2 * n, samples)
    cos_t = math.cos(theta)
    best = dirs @ dirs[0]
    centers = [dirs[0]]
    while len(centers) < max_centers:
        kmin = int(best.argmin())
        if best[kmin] >= cos_t:
            break
        z = dirs[kmin]
        centers.append(z)
        np.maximum(best, dirs @ z, out=best)
    margin = float(best.min()) - cos_t
    if margin < 0.0:
        raise CoverageUncertified(
            f"greedy cover hit the cap of {max_centers} centers"
        )
    return ConeCover(n=n, theta=theta, centers=np.array(centers),
                     margin=margin, certified=True)


def max_cone(vs: SympVectorSet, cc: ConeCover) -> int:
    """Index of a cone with maximal sum of member norms (ties to lowest).

    Membership is inclusive at the boundary; zero vectors belong nowhere
    but contribute nothing either.
    """
    norms = vs.norms()
    nz = norms > 0
    sums = np.zeros(cc.m)
    if nz.any():
        units = vs.vectors[nz] / norms[nz, None]
        member = (units @ cc.centers.T) >= math.cos(cc.theta) - 1e-12
        sums = member.T @ norms[nz]
    return int(np.argmax(sums))


def cone_norm_sum(vs: SympVectorSet, cc: ConeCover, j: int) -> float:
    norms = vs.norms()
    nz = norms > 0
    if not nz.any():
        return 0.0
    units = vs.vectors[nz] / norms[nz, None]
    member = (units @ cc.centers[j]) >= math.cos(cc.theta) - 1e-12
    return float(norms[nz][member].sum())


# ---------------------------------------------------------------------------
# the shear map and the proof constant
# ---------------------------------------------------------------------------


def shear_map(v: np.ndarray) -> np.ndarray:
    """The symplectic shear fixing span(v, J0 v)^perp:
    S(a v + b J0 v + w) = a/2 v + 2 b J0 v + w  (v normalized first)."""
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        raise ValueError("shear axis must be nonzero")
    v = np.asarray(v, dtype=np.float64) / nv
    jv = apply_J0(v)
    dim = v.shape[0]
    return np.eye(dim) - 0.5 * np.outer(v, v) + np.outer(jv, jv)


def apply_map(S: np.ndarray, u: np.ndarray) -> np.ndarray:
    """S u for one vector or a batch of row vectors."""
    return u @ S.T


def symplectic_defect(S: np.ndarray, n: int) -> float:
    """max |w0(Su, Su') - w0(u, u')| over a canonical test battery."""
    J = J0_matrix(n)
    return float(np.abs(S.T @ J @ S - J).max())


@lru_cache(maxsize=32)
def _cone_count(n: int, theta_key: int, samples: int, max_centers: int) -> int:
    theta = theta_key * 1e-15
    return cone_cover(n, theta, samples=samples, max_centers=max_centers).m


def proof_constant(n: int, theta: float, samples: int = 1_000_000,
                   max_centers: int = 2000) -> float:
    """The explicit constant 1 / (m(n, theta)^2 * 9 / sqrt(cos theta)).

    Valid for theta up to pi/30, where the shear contraction factor 2/3
    holds.  For n = 1 the cone count is the exact arc count; for n in
    {2, 3} it comes from the certified greedy cover (usually far from
    minimal, which only makes the constant smaller).
    """
    if not 0.0 < theta <= SHEAR_VALID_THETA + 1e-12:
        raise ValueError(
            f"theta must lie in (0, pi/30] for the proof constant, got {theta}"
        )
    if n == 1:
        m = math.ceil(math.pi / theta)
    else:
        m = _cone_count(n, round(theta / 1e-15), samples, max_centers)
    return math.sqrt(math.cos(theta)) / (9.0 * m * m)


# ---------------------------------------------------------------------------
# heuristic norm-sum minimization over Sp(2n)
# ---------------------------------------------------------------------------


@dataclass
class MinimizeResult:
    S: np.ndarray
    objective: float
    initial: float
    defect: float           # symplecticity residual of S


def _sym_basis(dim: int):
    basis = []
    for a in range(dim):
        for b in range(a, dim):
            E = np.zeros((dim, dim))
            E[a, b] = 1.0
            E[b, a] = 1.0
            basis.append(E)
    return basis


def minimize_over_sp(vs: SympVectorSet, steps: int = 120, seed: int = 0,
                     restarts: int = 10, polish: bool = True) -> MinimizeResult:
    """Descend sum_i ||S v_i|| over the symplectic group.

    Moves live in the Lie algebra (X with J0 X symmetric) through the
    exponential retraction with backtracking; several seeded restarts.
    For n = 1 the result is polished by cone shears until no shear
    decreases the sum, which is exactly the stationarity the hypercube
    chain inequality needs.  Heuristic: certified only to return a
    symplectic S with norm sum <= the input norm sum.
    """
    V = vs.vectors
    dim = 2 * vs.n
    sv = np.linalg.svd(V, compute_uv=False)
    if sv.size < dim or sv[-1] <= RANK_TOL * sv[0]:
        raise RequiresSpanning(
            "vectors must span R^{2n}; apply symplectic_reduce first"
        )
    J = J0_matrix(vs.n)

    def phi(S):
        return float(np.linalg.norm(V @ S.T, axis=1).sum())

    def grad_M(S):
        U = V @ S.T
        nrm = np.linalg.norm(U, axis=1)
        keep = nrm > 1e-14
        Uk = U[keep] / nrm[keep, None]
        JU = apply_J0(U[keep])
        G = JU.T @ Uk
        return 0.5 * (G + G.T)

    rng = np.random.default_rng(seed)
    best_S = np.eye(dim)
    best_val = phi(best_S)
    for r in range(restarts):
        if r == 0:
            S = np.eye(dim)
        else:
            M0 = rng.standard_normal((dim, dim)) * 0.1
            M0 = 0.5 * (M0 + M0.T)
            S = expm(-J @ M0)
        val = phi(S)
        t = 0.5
        for _ in range(steps):
            G = grad_M(S)
            gn = float(np.abs(G).max())
            if gn < 1e-14:
                break
            step_ok = False
            JG = J @ G
            for _ in range(30):
                cand = expm((t / gn) * JG) @ S   # X = J0 M with M = (t/gn) G
                cval = phi(cand)
                if cval < val - 1e-15:
                    S, val = cand, cval
                    t = min(t * 1.8, 10.0)
                    step_ok = True
                    break
                t *= 0.5
            if not step_ok:
                break
        if val < best_val:
            best_val, best_S = val, S

    if polish and vs.n == 1:
        cc = cone_cover(1, SHEAR_VALID_THETA, samples=10_000)
        for _ in range(200):
            cur = SympVectorSet(n=vs.n, vectors=V @ best_S.T)
            j = max_cone(cur, cc)
            norms = cur.norms()
            nz = norms > 0
            if not nz.any():
                break
            units = cur.vectors[nz] / norms[nz, None]
            member = (units @ cc.centers[j]) >= math.cos(cc.theta) - 1e-12
            axis = (cur.vectors[nz][member]).sum(axis=0)
            if float(np.linalg.norm(axis)) < 1e-14:
                break
            Sh = shear_map(axis)
            if phi(Sh @ best_S) < best_val * (1.0 - 1e-12):
                best_S = Sh @ best_S
                best_val = phi(best_S)
            else:
                break

    return MinimizeResult(
        S=best_S, objective=best_val, initial=vs.norm_sum(),
        defect=symplectic_defect(best_S, vs.n),
    )


def random_vector_set(rng: np.random.Generator, n: int, N: int,
                      scale: float = 1.0) -> SympVectorSet:
    return SympVectorSet(n=n, vectors=scale * rng.standard_normal((N, 2 * n)))
