"""Partial-quadrant position analysis for finite-dimensional subspaces.

The ambient model is E = R^n ⊕ W with quadrant C = [0,inf)^n ⊕ W, n being
the ambient GradedSpace's quadrant_rank.  A subspace N is *neat* when it has
a complement inside C, *in good position* when some complement and constant
c make membership of n + m in C equivalent to membership of n whenever
||m|| <= c ||n||.  For good-position subspaces C ∩ N is again a partial
quadrant; `quadrant_structure` produces the explicit isomorphism.

Feasibility questions (membership in a ray cone, extremality) are resolved
by nonnegative least squares; interior questions by one LP.  Both solvers
are deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls

from ._linalg import orthonormal_columns, svd_split
from .errors import Inconclusive, NotPointed
from .spaces import DEFAULT_TOL, GradedSpace

FEAS_TOL = 1e-8
LP_TOL = 1e-10


@dataclass(frozen=True)
class SubspaceInQuadrant:
    """A subspace of an ambient quadrant-marked space, given by basis columns."""

    ambient: GradedSpace
    basis: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if B.shape[0] != self.ambient.dim:
            B = B.T
        if B.shape[0] != self.ambient.dim:
            raise ValueError(f"basis rows {B.shape} do not match ambient dim {self.ambient.dim}")
        if not np.all(np.isfinite(B)):
            raise ValueError("basis vectors must be finite")
        if B.shape[1] and np.linalg.matrix_rank(B, tol=1e-10) != B.shape[1]:
            raise ValueError("basis vectors must be linearly independent")
        B = B.copy()
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.ambient.quadrant_rank

    def constraint_matrix(self) -> np.ndarray:
        """Rows g_i with (B y)_i = g_i . y for the constrained coordinates."""
        return self.basis[: self.n, :]


@dataclass(frozen=True)
class PolyhedralCone:
    """C ∩ N as ray data: carrier subspace, unit generators, pointedness.

    Pointed means no nonzero x has both x and -x representable, i.e. the
    lineality space is trivial; otherwise a basis of it is carried.
    """

    carrier: SubspaceInQuadrant
    rays: tuple
    pointed: bool
    lineality_basis: np.ndarray | None = None


@dataclass(frozen=True)
class NeatnessResult:
    neat: bool
    complement: np.ndarray | None = None


def is_neat(N: SubspaceInQuadrant) -> NeatnessResult:
    """Neat iff the constrained-coordinate projection maps N onto R^n.

    When neat, returns the complement {0}^n ⊕ Q with Q a complement of the
    W-part of N ∩ ({0}^n ⊕ W) inside W; that complement lies inside the
    quadrant.
    """
    n = N.n
    dim = N.ambient.dim
    G = N.constraint_matrix()
    if n and (N.dim < n or np.linalg.matrix_rank(G, tol=1e-10) < n):
        return NeatnessResult(neat=False)
    # kernel of the projection restricted to N, pushed into W coordinates
    _, ker_coeff, _, _ = svd_split(G) if n else (0, np.eye(N.dim), None, None)
    K_w = (N.basis @ ker_coeff)[n:, :] if N.dim else np.zeros((dim - n, 0))
    K_w = orthonormal_columns(K_w)
    # complement Q of K_w inside W: orthogonal complement
    full = np.eye(dim - n)
    if K_w.shape[1]:
        proj = full - K_w @ K_w.T
        Q = orthonormal_columns(proj)
    else:
        Q = full
    comp = np.zeros((dim, Q.shape[1]))
    comp[n:, :] = Q
    return NeatnessResult(neat=True, complement=comp)


def _interior_point(N: SubspaceInQuadrant):
    """A coefficient vector y with (B y)_i >= 1 on all constraints, or None.

    Solved as an LP maximizing the margin t subject to G y >= t, |y| <= bound.
    """
    n = N.n
    if n == 0:
        return np.zeros(N.dim) if N.dim == 0 else np.eye(N.dim)[:, 0]
    if N.dim == 0:
        return None
    G = N.constraint_matrix()
    d = N.dim
    # variables (y, t): maximize t  s.t.  -G y + t <= 0,  t <= 1, |y_j| <= 100
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-G, np.ones((n, 1))])
    b_ub = np.zeros(n)
    bounds = [(-100.0, 100.0)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success or res.x is None or res.x[-1] <= LP_TOL:
        return None
    y = res.x[:d]
    margin = np.min(G @ y) if n else 1.0
    return y / margin if margin > 0 else None


@dataclass(frozen=True)
class GoodPositionResult:
    ok: bool
    c: float | None = None
    complement: np.ndarray | None = None
    neat: bool = False
    counterexample: tuple | None = None


def _orthogonal_complement(N: SubspaceInQuadrant) -> np.ndarray:
    B = orthonormal_columns(N.basis)
    proj = np.eye(N.ambient.dim) - B @ B.T
    return orthonormal_columns(proj)


def _coordinate_complements(N: SubspaceInQuadrant, limit: int = 40):
    """Complements spanned by coordinate vectors, when they exist."""
    dim, d = N.ambient.dim, N.dim
    out = []
    for subset in itertools.islice(itertools.combinations(range(dim), dim - d), 200):
        E = np.eye(dim)[:, list(subset)]
        if np.linalg.matrix_rank(np.hstack([N.basis, E]), tol=1e-10) == dim:
            out.append(E)
            if len(out) >= limit:
                break
    return out


def _good_position_samples(N: SubspaceInQuadrant, comp, c: float, grid: int, rng, tol: float,
                           interior=None):
    """Yield (n, m) test pairs concentrated where a bad complement fails.

    Half the n samples start near the cone (along the LP interior direction
    when one exists) and then have one constrained coordinate pushed into
    the band (-2c||n||, 2c||n||) -- membership of n + m can only disagree
    with membership of n there.  The band facet is chosen among those the
    complement can reach, and m is aimed at it.
    """
    n_rank = N.n
    G = N.constraint_matrix()
    y_int = None
    if interior is not None:
        nrm = float(np.linalg.norm(interior))
        if nrm > 1e-12:
            y_int = interior / nrm
    # facets whose coordinate the complement can move at all
    if comp.shape[1]:
        reach = [i for i in range(n_rank) if float(comp[i] @ comp[i]) > 1e-20]
    else:
        reach = []
    for trial in range(grid):
        biased = y_int is not None and trial % 2 == 0
        if biased:
            yn = rng.exponential() * y_int + 0.25 * rng.normal(size=N.dim)
        else:
            yn = rng.normal(size=N.dim)
        nvec = N.basis @ yn
        norm_n = N.ambient.level_norm(nvec, 0)
        if norm_n < 1e-12:
            continue
        i_band = None
        if n_rank and trial % 2 == 0:
            pool = reach if reach else range(n_rank)
            i = min(pool, key=lambda j: abs(nvec[j]))
            row = G[i]
            nr = float(row @ row)
            if nr > 1e-14:
                target = rng.uniform(-2.0, 2.0) * c * norm_n
                yn = yn + row * ((target - nvec[i]) / nr)
                nvec = N.basis @ yn
                norm_n = N.ambient.level_norm(nvec, 0)
                if norm_n < 1e-12:
                    continue
                i_band = i
        ym = rng.normal(size=comp.shape[1]) if comp.shape[1] else np.zeros(0)
        if i_band is not None and i_band in reach:
            # aim the complement perturbation at the band facet
            ym = rng.choice([-1.0, 1.0]) * comp[i_band] + 0.2 * ym
        mvec = comp @ ym if comp.shape[1] else np.zeros(N.ambient.dim)
        norm_m = N.ambient.level_norm(mvec, 0)
        if norm_m > 1e-12:
            mvec = mvec * ((c * norm_n / norm_m) * rng.uniform(0.0, 1.0))
        head = nvec[:n_rank]
        if n_rank and np.min(np.abs(head)) <= 10 * tol * max(1.0, norm_n):
            continue
        yield nvec, mvec


def check_position_pair(N: SubspaceInQuadrant, complement, c: float, grid: int = 2000,
                        seed: int = 0, tol: float = DEFAULT_TOL):
    """Sample the good-position equivalence for one (complement, c) pair.

    Returns None when no counterexample was found, else the offending
    (n, m) pair.
    """
    comp = np.atleast_2d(np.asarray(complement, dtype=float))
    if comp.shape[0] != N.ambient.dim:
        comp = comp.T
    rng = np.random.Generator(np.random.Philox(key=seed))
    interior = _interior_point(N)
    for nvec, mvec in _good_position_samples(N, comp, c, grid, rng, tol, interior=interior):
        if N.ambient.contains_quadrant_point(nvec, tol) != N.ambient.contains_quadrant_point(nvec + mvec, tol):
            return nvec, mvec
    return None


def is_good_position(N: SubspaceInQuadrant, complement_candidates=(), grid: int = 2000,
                     seed: int = 0, tol: float = DEFAULT_TOL) -> GoodPositionResult:
    """Search for a complement and constant certifying good position.

    (a) N ∩ C must have nonempty interior in N (LP).
    (b) For a candidate complement and constant c, sampled pairs (n, m) with
        ||m||_E <= c ||n||_E must satisfy: n + m in C  <=>  n in C.  Half of
        the samples are biased into the band where the smallest constrained
        coordinate of n is on the scale of c ||n||, which is where bad
        complements fail.

    Neat subspaces short-circuit to c = 1 with the neat complement.  The
    search is bounded: candidates are the orthogonal complement, coordinate
    complements, and any user-supplied ones, with c over 1, 1/2, ..., 2^-10;
    exhaustion raises Inconclusive.
    """
    neat_res = is_neat(N)
    if neat_res.neat:
        return GoodPositionResult(ok=True, c=1.0, complement=neat_res.complement, neat=True)
    y0 = _interior_point(N)
    if y0 is None:
        return GoodPositionResult(ok=False)
    candidates = [np.atleast_2d(np.asarray(cand, dtype=float)) for cand in complement_candidates]
    candidates = [cand if cand.shape[0] == N.ambient.dim else cand.T for cand in candidates]
    candidates.extend(_coordinate_complements(N))
    candidates.append(_orthogonal_complement(N))
    def has_counterexample(comp, c, batch_grid, key):
        batch_rng = np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(key)))
        for nvec, mvec in _good_position_samples(N, comp, c, batch_grid, batch_rng, tol, interior=y0):
            in_n = N.ambient.contains_quadrant_point(nvec, tol)
            in_sum = N.ambient.contains_quadrant_point(nvec + mvec, tol)
            if in_n != in_sum:
                return True
        return False

    for ci, comp in enumerate(candidates):
        if comp.shape[1] + N.dim != N.ambient.dim:
            continue
        for cj, c in enumerate([2.0**-j for j in range(0, 11)]):
            # a pair passes only if two independent sample batches find no
            # counterexample; the second batch is twice as large
            if has_counterexample(comp, c, grid, (seed, ci, cj, 0)):
                continue
            if has_counterexample(comp, c, 2 * grid, (seed, ci, cj, 1)):
                continue
            return GoodPositionResult(ok=True, c=c, complement=comp)
    raise Inconclusive("no (complement, c) candidate certified good position; search is not a proof")


def _ray_cone_data(N: SubspaceInQuadrant):
    """Constraint rows G for the coefficient cone {y : G y >= 0} of C ∩ N."""
    return N.constraint_matrix()


def cone_lineality(N: SubspaceInQuadrant):
    """Basis of the lineality space of C ∩ N inside the coefficient space."""
    G = _ray_cone_data(N)
    if N.n == 0:
        return np.eye(N.dim)
    _, ker, _, _ = svd_split(G)
    return ker


def _nnls_residual(A, b):
    if A.shape[1] == 0:
        return float(np.linalg.norm(b))
    _, res = nnls(A, b)
    return float(res)


def extreme_rays(N: SubspaceInQuadrant, tol: float = FEAS_TOL) -> list:
    """Unit generators of the extreme rays of the pointed cone C ∩ N.

    Enumerates active-constraint subsets of size dim N - 1, solves the
    induced equality systems, and filters candidates by membership and an
    extremality test (a ray must not be a nonnegative combination of the
    others).  Exact at desk dimensions.  Raises NotPointed with the
    lineality basis when the cone contains a line.
    """
    d = N.dim
    if d == 0:
        return []
    lin = cone_lineality(N)
    if lin.shape[1] > 0:
        raise NotPointed("cone contains a line", lineality_basis=N.basis @ lin)
    G = _ray_cone_data(N)
    n = G.shape[0]
    candidates = []
    if d == 1:
        for sgn in (1.0, -1.0):
            y = np.array([sgn])
            if np.all(G @ y >= -tol):
                candidates.append(y)
    else:
        for subset in itertools.combinations(range(n), d - 1):
            sub = G[list(subset), :]
            _, ker, _, _ = svd_split(sub)
            if ker.shape[1] != 1:
                continue
            y = ker[:, 0]
            for sgn in (1.0, -1.0):
                cand = sgn * y
                if np.all(G @ cand >= -tol * max(1.0, float(np.max(np.abs(G @ cand))))):
                    candidates.append(cand)
                    break
    # dedupe by direction
    uniq = []
    for y in candidates:
        y = y / np.linalg.norm(y)
        if not any(np.linalg.norm(y - u) < 1e-8 for u in uniq):
            uniq.append(y)
    # extremality: y is extreme iff it is not a nonneg combination of the others
    rays = []
    for i, y in enumerate(uniq):
        others = [u for j, u in enumerate(uniq) if j != i]
        if others:
            A = np.column_stack(others)
            if _nnls_residual(A, y) <= tol:
                continue
        rays.append(y)
    ambient_rays = []
    for y in rays:
        r = N.basis @ y
        ambient_rays.append(r / np.linalg.norm(r))
    if not ambient_rays:
        return []
    order = np.lexsort(np.round(np.column_stack(ambient_rays), 10)[::-1])
    return [ambient_rays[i] for i in order]


def cone_membership_residual(point, rays, tol: float = FEAS_TOL) -> float:
    """NNLS residual of representing `point` as a nonneg combination of rays."""
    point = np.asarray(point, dtype=float)
    if not len(rays):
        return float(np.linalg.norm(point))
    A = np.column_stack(rays)
    return _nnls_residual(A, point)


def polyhedral_cone(N: SubspaceInQuadrant) -> PolyhedralCone:
    """C ∩ N packaged as ray data; non-pointed cones carry their lineality."""
    lin = cone_lineality(N)
    if lin.shape[1]:
        return PolyhedralCone(carrier=N, rays=(), pointed=False,
                              lineality_basis=orthonormal_columns(N.basis @ lin))
    return PolyhedralCone(carrier=N, rays=tuple(extreme_rays(N)), pointed=True)


@dataclass(frozen=True)
class QuadrantRecognition:
    is_quadrant: bool
    rays: list = field(default_factory=list)
    iso_to_standard: np.ndarray | None = None


def is_quadrant(N: SubspaceInQuadrant, tol: float = FEAS_TOL) -> QuadrantRecognition:
    """True iff C ∩ N has exactly dim N independent extreme rays.

    When true, also returns the linear map sending the rays to the standard
    basis, i.e. an isomorphism (N, C ∩ N) -> (R^d, [0,inf)^d) in ambient
    coordinates (acting on N).
    """
    rays = extreme_rays(N, tol)
    d = N.dim
    if len(rays) != d:
        return QuadrantRecognition(is_quadrant=False, rays=rays)
    R = np.column_stack(rays)
    coeff = np.linalg.lstsq(N.basis, R, rcond=None)[0]
    if np.linalg.matrix_rank(coeff, tol=1e-8) != d:
        return QuadrantRecognition(is_quadrant=False, rays=rays)
    # map x = B y -> coordinates in the ray basis
    iso = np.linalg.inv(coeff) @ np.linalg.pinv(N.basis)
    return QuadrantRecognition(is_quadrant=True, rays=rays, iso_to_standard=iso)


def sigma_set(a, n: int, tol: float = DEFAULT_TOL) -> frozenset:
    """Indices i < n with |a_i| <= tol, for a point a of the quadrant."""
    a = np.asarray(getattr(a, "coords", a), dtype=float)
    return frozenset(int(i) for i in np.nonzero(np.abs(a[:n]) <= tol)[0])


@dataclass(frozen=True)
class QuadrantStructure:
    """Explicit model (N, C ∩ N) ≅ (R^dimN, [0,inf)^q ⊕ R^(dimN-q)).

    `to_standard` maps ambient points of N to model coordinates whose first
    `quadrant_count` entries are the constrained ones; `from_standard` is the
    inverse embedding back into the ambient space.
    """

    sigma: frozenset
    ntilde_basis: np.ndarray
    quadrant_count: int
    to_standard: np.ndarray
    from_standard: np.ndarray
    rays: list


def quadrant_structure(N: SubspaceInQuadrant, certified: bool = False,
                       tol: float = DEFAULT_TOL) -> QuadrantStructure:
    """Standard-quadrant coordinates for C ∩ N of a good-position subspace.

    Splits N into a complement Ntilde of N ∩ W and the W-part, enumerates
    the extreme rays of the (automatically pointed) cone C ∩ Ntilde, forms
    Sigma as the union of the rays' vanishing-index sets, and builds the
    bijection Ntilde -> R^Sigma (first case) or the single-ray model
    (second case, Sigma empty).  `certified` asserts good position was
    checked by the caller; otherwise it is verified here.
    """
    if not certified:
        res = is_good_position(N)
        if not res.ok:
            raise Inconclusive("subspace not certified to be in good position")
    n = N.n
    dim = N.ambient.dim
    d = N.dim
    # split N into (N ∩ W) and a complement Ntilde
    G = N.constraint_matrix()
    if n:
        _, ker_coeff, _, _ = svd_split(G)
    else:
        ker_coeff = np.eye(d)
    NW_coeff = ker_coeff                              # coefficients spanning N ∩ W
    if NW_coeff.shape[1]:
        proj = np.eye(d) - NW_coeff @ NW_coeff.T
        Nt_coeff = orthonormal_columns(proj)
    else:
        Nt_coeff = np.eye(d)
    ntilde = N.basis @ Nt_coeff
    nw = N.basis @ NW_coeff

    if Nt_coeff.shape[1]:
        Nt = SubspaceInQuadrant(ambient=N.ambient, basis=ntilde)
        rays = extreme_rays(Nt)
    else:
        rays = []
    sigma = frozenset().union(*(sigma_set(r, n, tol=1e-8) for r in rays)) if rays else frozenset()
    sig_sorted = sorted(sigma)
    dt = ntilde.shape[1]

    if dt == 0:
        # N ⊂ W: no constraints at all
        to_std = np.linalg.pinv(nw) if nw.shape[1] else np.zeros((0, dim))
        from_std = nw
        return QuadrantStructure(sigma=sigma, ntilde_basis=ntilde, quadrant_count=0,
                                 to_standard=to_std, from_standard=from_std, rays=rays)

    if len(sigma) == dt:
        # first case: p: Ntilde -> R^Sigma is a bijection
        P_sigma = np.zeros((dt, dim))
        for row, i in enumerate(sig_sorted):
            P_sigma[row, i] = 1.0
        M = P_sigma @ ntilde                          # dt x dt, invertible
        M_inv = np.linalg.inv(M)
        from_std = np.hstack([ntilde @ M_inv, nw]) if nw.shape[1] else ntilde @ M_inv
        if nw.shape[1]:
            # W-part coefficients extracted through the combined basis
            combined_pinv = np.linalg.pinv(np.hstack([ntilde, nw]))
            to_std = np.vstack([P_sigma, combined_pinv[dt:, :]])
        else:
            to_std = P_sigma
        return QuadrantStructure(sigma=sigma, ntilde_basis=ntilde, quadrant_count=dt,
                                 to_standard=to_std, from_standard=from_std, rays=rays)

    if dt == 1 and len(rays) == 1:
        # second case: Ntilde = R·a with a interior to the constraints
        a = rays[0].reshape(-1, 1)
        from_std = np.hstack([a, nw]) if nw.shape[1] else a
        to_std = np.linalg.pinv(from_std)
        return QuadrantStructure(sigma=sigma, ntilde_basis=ntilde, quadrant_count=1,
                                 to_standard=to_std, from_standard=from_std, rays=rays)

    raise Inconclusive(
        f"ray structure (dim Ntilde={dt}, #Sigma={len(sigma)}, #rays={len(rays)}) matches neither "
        "quadrant-structure case; good position likely fails"
    )
