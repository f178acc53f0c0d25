"""Good parametrizations of zero sets near interior and corner points.

Near a zero q with surjective linearization, the zero set of a section in
contraction normal form is the graph of a map A from a neighborhood Q in the
kernel N of f'(q) into a complement: Gamma(n) = q + n + A(n) with A(0) = 0,
DA(0) = 0.  The interior construction solves the fiber equation by fixed
point, the finite-dimensional remainder by Newton, and reparametrizes the
result over the kernel; the corner construction runs the same pipeline over
the partial quadrant N ∩ C_q supplied by the cone analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cones
from ._linalg import fd_jacobian, is_surjective, orthonormal_columns, subspace_intersection, svd_split
from .errors import (
    GermforgeError,
    NoOverlap,
    NonConvergence,
    NotSurjective,
    PositionNotCertified,
)
from .fredholm import BasicGerm
from .germs import ContractionGerm, SolutionGerm, germ_derivative
from .spaces import DEFAULT_TOL, GradedSpace

CACHE_QUANTUM = 1e-12
RESIDUAL_TOL = 1e-9
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 60


def _newton(func, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, damping=True):
    """Damped Newton iteration for square systems, FD Jacobian."""
    x = np.asarray(x0, dtype=float).copy()
    if x.size == 0:
        return x
    fx = np.atleast_1d(func(x))
    for _ in range(max_iter):
        nrm = float(np.max(np.abs(fx))) if fx.size else 0.0
        if nrm <= tol:
            return x
        J = fd_jacobian(func, x)
        try:
            step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"Newton linear solve failed: {exc}", residual=nrm) from exc
        lam = 1.0
        while damping and lam > 1e-6:
            trial = x + lam * step
            ft = np.atleast_1d(func(trial))
            if float(np.max(np.abs(ft))) < nrm:
                x, fx = trial, ft
                break
            lam *= 0.5
        else:
            x = x + step
            fx = np.atleast_1d(func(x))
    nrm = float(np.max(np.abs(fx))) if fx.size else 0.0
    if nrm <= tol * 100:
        return x
    raise NonConvergence(f"Newton stalled at residual {nrm:.3e}", residual=nrm)


@dataclass(frozen=True)
class GoodParametrization:
    """Graph chart Gamma(n) = q + n + A(n) over the kernel of f'(q).

    Kernel points are addressed by coefficient vectors t in the orthonormal
    columns of kernel_basis.  For boundary charts `structure` carries the
    standard-quadrant coordinates of the domain N ∩ C_q and `ambient_rank`
    the number of constrained ambient coordinates.
    """

    base_point: np.ndarray
    kernel_basis: np.ndarray
    complement_basis: np.ndarray
    radius: float
    section: object
    a_map: object
    structure: cones.QuadrantStructure | None = None
    ambient_rank: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.kernel_basis.shape[1]

    @property
    def is_boundary(self) -> bool:
        return self.structure is not None

    def a_vector(self, t):
        """A(n) for n = kernel_basis @ t, cached on quantized coefficients.

        The cache behaves as if each entry were computed exactly once:
        concurrent lookups of the same key return identical values because
        the underlying solvers are deterministic.
        """
        t = np.asarray(t, dtype=float)
        key = tuple(np.round(t / CACHE_QUANTUM).astype(np.int64))
        hit = self._cache.get(key)
        if hit is None:
            hit = np.asarray(self.a_map(t), dtype=float)
            self._cache[key] = hit
        return hit

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return self.base_point + self.kernel_basis @ t + self.a_vector(t)

    def section_value(self, x):
        return np.atleast_1d(np.asarray(self.section(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x):
        return fd_jacobian(self.section_value, np.asarray(x, dtype=float))

    def residual(self, t) -> float:
        return float(np.max(np.abs(self.section_value(self.gamma(t)))))

    def domain_contains(self, t, tol: float = DEFAULT_TOL) -> bool:
        t = np.asarray(t, dtype=float)
        if np.linalg.norm(t) >= self.radius:
            return False
        if self.structure is None:
            return True
        s = self.structure.to_standard @ (self.kernel_basis @ t)
        return bool(np.all(s[: self.structure.quadrant_count] >= -tol))

    def domain_samples(self, count: int, seed: int = 0, scale: float = 0.8):
        """Deterministic coefficient samples inside the domain."""
        rng = np.random.Generator(np.random.Philox(key=seed))
        out = []
        d = self.dim
        guard = 0
        while len(out) < count and guard < 100 * count + 100:
            guard += 1
            t = rng.uniform(-1.0, 1.0, size=d) * self.radius * scale
            if self.structure is not None:
                s = self.structure.to_standard @ (self.kernel_basis @ t)
                s[: self.structure.quadrant_count] = np.abs(s[: self.structure.quadrant_count])
                n = self.structure.from_standard @ s
                t = self.kernel_basis.T @ n
            if self.domain_contains(t):
                out.append(t)
        return out

    def kernel_transport(self, t):
        """Columns dn + DA(n) dn spanning ker f'(Gamma(t)) for dn in the kernel."""
        t = np.asarray(t, dtype=float)
        d = self.dim
        h = 1e-6
        cols = []
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            dA = (self.a_vector(t + e) - self.a_vector(t - e)) / (2 * h)
            cols.append(self.kernel_basis[:, j] + dA)
        return np.column_stack(cols) if cols else np.zeros((self.base_point.size, 0))


def _translated_pieces(bg: BasicGerm, q):
    """Solution-germ and remainder data of bg recentered at the zero q."""
    q = np.asarray(q, dtype=float)
    wdim = bg.W.dim
    n = bg.n
    fq = bg.evaluate(q)
    if float(np.max(np.abs(fq))) > 1e-8:
        raise GermforgeError(f"base point is not a zero (|f(q)| = {np.max(np.abs(fq)):.3e})")

    def shifted(x):
        return bg.evaluate(q + x)

    inner = None
    if wdim:
        def B(v, w):
            val = shifted(np.concatenate([v, w]))
            return w - bg.project_W(val)

        inner = ContractionGerm(
            parameter_space=bg.parameter_space,
            solution_space=bg.W,
            B=B,
            contraction_schedule=dict(bg.contraction_schedule),
        )
    return shifted, inner


def _delta_solver(inner, n, wdim):
    if inner is None:
        return (lambda v: np.zeros(wdim)), (lambda: np.zeros((wdim, n)))
    sol = SolutionGerm(inner)

    def dprime0():
        return germ_derivative(inner, np.zeros(n))

    return sol, dprime0


def build_parametrization(bg: BasicGerm, q, radius: float = 0.5,
                          residual_tol: float = RESIDUAL_TOL,
                          max_shrinks: int = 20) -> GoodParametrization:
    """Good parametrization of {f = 0} near an interior zero q.

    Pipeline: solve the fiber equation for delta(v); form the remainder
    G(v) = (1-P) f(v, delta(v)) whose linearization is onto; Newton-solve
    G(r + c(r)) = 0 over the kernel of DG(0); reparametrize the resulting
    zero curve over ker f'(q) to obtain the graph map A.  The domain radius
    shrinks by halves until the chart invariants hold on samples; the final
    radius is recorded on the chart.

    Raises NotSurjective when f'(q) (or DG(0)) has a rank deficit and
    NonConvergence from the inner solvers.
    """
    q = np.asarray(q, dtype=float)
    n, wdim = bg.n, bg.W.dim
    shifted, inner = _translated_pieces(bg, q)
    delta, _ = _delta_solver(inner, n, wdim)

    J = fd_jacobian(shifted, np.zeros(bg.domain_dim))
    if not is_surjective(J):
        raise NotSurjective("linearization at the base zero is not onto")
    _, kernel, _, _ = svd_split(J)
    d = kernel.shape[1]

    def G(v):
        return shifted(np.concatenate([v, delta(v)]))[: bg.N]

    DG0 = fd_jacobian(G, np.zeros(n)) if bg.N else np.zeros((0, n))
    if bg.N and not is_surjective(DG0):
        raise NotSurjective("remainder linearization DG(0) is not onto")
    _, Kc, _, _ = svd_split(DG0) if bg.N else (0, np.eye(n), None, None)
    Cp = orthonormal_columns(np.eye(n) - Kc @ Kc.T) if Kc.shape[1] < n else np.zeros((n, 0))

    def c_of_r(r):
        if Cp.shape[1] == 0:
            return np.zeros(0)
        return _newton(lambda z: G(Kc @ r + Cp @ z), np.zeros(Cp.shape[1]))

    def beta(r):
        v = Kc @ r + (Cp @ c_of_r(r) if Cp.shape[1] else 0.0)
        return np.concatenate([v, delta(v)])

    Dbeta0 = fd_jacobian(beta, np.zeros(Kc.shape[1]))
    Dbeta0_pinv = np.linalg.pinv(Dbeta0)

    def alpha(t):
        r = Dbeta0_pinv @ (kernel @ t)
        return beta(r)

    def gamma_coeffs(t_target):
        return _newton(lambda t: kernel.T @ alpha(t) - t_target, t_target)

    def a_map(t_target):
        t_target = np.asarray(t_target, dtype=float)
        pt = alpha(gamma_coeffs(t_target))
        return pt - kernel @ (kernel.T @ pt)

    complement = orthonormal_columns(np.eye(bg.domain_dim) - kernel @ kernel.T)

    def section(x):
        return bg.evaluate(x)

    r = radius
    for _ in range(max_shrinks):
        chart = GoodParametrization(
            base_point=q, kernel_basis=kernel, complement_basis=complement,
            radius=r, section=section, a_map=a_map,
        )
        if _chart_invariants_hold(chart, residual_tol):
            return chart
        r /= 2.0
    raise NonConvergence(f"no radius down to {r:.2e} satisfied the chart invariants")


def _chart_invariants_hold(chart: GoodParametrization, residual_tol: float,
                           samples: int = 12, seed: int = 11) -> bool:
    d = chart.dim
    try:
        a0 = np.linalg.norm(chart.a_vector(np.zeros(d)))
        if a0 > 1e-8:
            return False
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1e-5
            da = (chart.a_vector(e) - chart.a_vector(-e)) / 2e-5
            if np.linalg.norm(da) > 1e-5:
                return False
        for t in chart.domain_samples(samples, seed=seed):
            if chart.residual(t) > residual_tol:
                return False
            Jt = chart.jacobian(chart.gamma(t))
            if not is_surjective(Jt):
                return False
            transported = chart.kernel_transport(t)
            _, ker_t, _, _ = svd_split(Jt)
            if ker_t.shape[1] != d:
                return False
            # transported columns must lie in ker f'(Gamma(t))
            proj = transported - ker_t @ (ker_t.T @ transported)
            if transported.size and np.max(np.abs(proj)) > 1e-5 * max(1.0, np.max(np.abs(transported))):
                return False
    except (NonConvergence, GermforgeError):
        return False
    return True


def recentre(gp: GoodParametrization, n0) -> GoodParametrization:
    """Chart with the same zero set re-based at q0 = Gamma(n0).

    The new kernel is the transport of the old one, the complement is
    reused, and the new graph map is the remainder of Gamma around n0.  The
    new radius is chosen inside the old domain so the recentred image stays
    in the original chart.
    """
    n0 = np.asarray(n0, dtype=float)
    if not gp.domain_contains(n0):
        raise GermforgeError("recentre point outside the chart domain")
    if gp.structure is not None:
        s = gp.structure.to_standard @ (gp.kernel_basis @ n0)
        if np.any(np.abs(s[: gp.structure.quadrant_count]) <= DEFAULT_TOL):
            raise GermforgeError(
                "recentre target sits on a boundary stratum; recentring is an interior operation"
            )
    q0 = gp.gamma(n0)
    transported = gp.kernel_transport(n0)
    new_kernel = orthonormal_columns(transported)
    # sigma maps new-kernel coefficients back to old-kernel increments
    lift = np.linalg.pinv(transported) @ new_kernel

    def a_map(t):
        t = np.asarray(t, dtype=float)
        dn = lift @ t
        offset = gp.gamma(n0 + dn) - q0
        # offset = new_kernel t + remainder in the old complement, exactly
        return offset - new_kernel @ t

    remaining = (gp.radius - float(np.linalg.norm(n0))) * 0.7
    return GoodParametrization(
        base_point=q0, kernel_basis=new_kernel, complement_basis=gp.complement_basis,
        radius=max(remaining, 1e-6), section=gp.section, a_map=a_map,
        structure=None, ambient_rank=gp.ambient_rank,
    )


@dataclass(frozen=True)
class BundleIso:
    """Base diffeomorphism with inverse plus a linear fiber map per point."""

    base: object
    base_inv: object
    fiber: object = None   # fiber(x) -> matrix; identity when None

    def push_section(self, section):
        def pushed(y):
            x = np.asarray(self.base_inv(np.asarray(y, dtype=float)), dtype=float)
            val = np.atleast_1d(np.asarray(section(x), dtype=float))
            if self.fiber is None:
                return val
            return np.atleast_2d(np.asarray(self.fiber(x), dtype=float)) @ val
        return pushed


def transform(gp: GoodParametrization, phi: BundleIso) -> GoodParametrization:
    """Chart for the pushforward section near q' = phi(q).

    New kernel = Tphi(q) applied to the old kernel; the graph map is rebuilt
    from the transported parametrization by projecting onto the new kernel
    and inverting the resulting local diffeomorphism.
    """
    if gp.is_boundary:
        raise GermforgeError("transform is defined for interior charts; corner charts keep their quadrant domain")
    q = gp.base_point
    qp = np.asarray(phi.base(q), dtype=float)
    Tphi = fd_jacobian(lambda x: np.asarray(phi.base(x), dtype=float), q)
    s = np.linalg.svd(Tphi, compute_uv=False)
    if s[-1] <= 1e-10 * max(s[0], 1.0):
        raise GermforgeError("base map Jacobian is singular at the chart point")
    new_kernel = orthonormal_columns(Tphi @ gp.kernel_basis)
    if new_kernel.shape[1] != gp.dim:
        raise GermforgeError("kernel collapsed under the base map")
    sigma = np.linalg.pinv(Tphi @ gp.kernel_basis) @ new_kernel

    def curve(tp):
        """Transported zero curve q' + image of Gamma."""
        return np.asarray(phi.base(gp.gamma(sigma @ tp)), dtype=float)

    def tau(tp):
        return new_kernel.T @ (curve(tp) - qp)

    def a_map(tp):
        tp = np.asarray(tp, dtype=float)
        t_inv = _newton(lambda z: tau(z) - tp, tp)
        offset = curve(t_inv) - qp
        return offset - new_kernel @ (new_kernel.T @ offset)

    new_section = phi.push_section(gp.section_value)
    complement = orthonormal_columns(np.eye(qp.size) - new_kernel @ new_kernel.T)
    scale = float(np.linalg.svd(Tphi @ gp.kernel_basis, compute_uv=False)[-1])
    return GoodParametrization(
        base_point=qp, kernel_basis=new_kernel, complement_basis=complement,
        radius=gp.radius * scale * 0.7, section=new_section, a_map=a_map,
        structure=None, ambient_rank=gp.ambient_rank,
    )


@dataclass(frozen=True)
class TransitionMap:
    """Evaluable overlap map sigma with Gamma_1(sigma(t)) = Gamma_2(t)."""

    gp1: GoodParametrization
    gp2: GoodParametrization

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        target = self.gp2.gamma(t)
        offset = target - self.gp1.base_point
        return self.gp1.kernel_basis.T @ offset

    def derivative(self, t):
        return fd_jacobian(self.__call__, np.asarray(t, dtype=float))

    def mismatch(self, t) -> float:
        """||Gamma_1(sigma(t)) - Gamma_2(t)|| at an overlap sample."""
        s = self(t)
        return float(np.max(np.abs(self.gp1.gamma(s) - self.gp2.gamma(t))))


def transition_map(gp1: GoodParametrization, gp2: GoodParametrization, shared_zero) -> TransitionMap:
    """Overlap reparametrization sigma(t) = P_1(q2 - q1 + n + A_2(n)).

    Raises NoOverlap when the shared zero does not lie in both chart images.
    """
    z = np.asarray(shared_zero, dtype=float)
    for gp in (gp1, gp2):
        t = gp.kernel_basis.T @ (z - gp.base_point)
        if not gp.domain_contains(t, tol=1e-6):
            raise NoOverlap("shared zero lies outside a chart domain")
        if np.max(np.abs(gp.gamma(t) - z)) > 1e-6:
            raise NoOverlap("shared zero is not on a chart image")
    return TransitionMap(gp1=gp1, gp2=gp2)


def build_boundary_parametrization(bg: BasicGerm, q, position_certificate=None,
                                   radius: float = 0.4,
                                   residual_tol: float = RESIDUAL_TOL,
                                   max_shrinks: int = 20) -> GoodParametrization:
    """Good parametrization near a corner zero q over the quadrant N ∩ C_q.

    Requires the kernel of f'(q) to be in good position to the tangent
    quadrant; the certificate is computed via the cone analysis when not
    supplied.  The domain is the partial quadrant carried as a
    quadrant-structure result; the graph map comes from the transported
    finite-dimensional implicit function over N' ∩ C'.
    """
    q = np.asarray(q, dtype=float)
    n, k, wdim = bg.n, bg.k, bg.W.dim
    shifted, inner = _translated_pieces(bg, q)
    delta, dprime0 = _delta_solver(inner, n, wdim)

    # active constraints at q determine the local tangent quadrant
    active = [i for i in range(k) if abs(q[i]) <= DEFAULT_TOL]
    if not active:
        return build_parametrization(bg, q, radius=radius, residual_tol=residual_tol)
    if active != list(range(len(active))):
        raise GermforgeError(
            "boundary construction expects the active constraints to be the leading coordinates"
        )
    local_rank = len(active)

    J = fd_jacobian(shifted, np.zeros(bg.domain_dim))
    if not is_surjective(J):
        raise NotSurjective("linearization at the corner zero is not onto")

    def G(v):
        return shifted(np.concatenate([v, delta(v)]))[: bg.N]

    DG0 = fd_jacobian(G, np.zeros(n)) if bg.N else np.zeros((0, n))
    if bg.N and not is_surjective(DG0):
        raise NotSurjective("remainder linearization is not onto at the corner")
    _, Nprime, _, _ = svd_split(DG0) if bg.N else (0, np.eye(n), None, None)

    dp0 = dprime0()
    T = np.eye(bg.domain_dim)
    if wdim:
        T[n:, :n] = dp0
    kernel = orthonormal_columns(T[:, :n] @ Nprime)

    ambient = GradedSpace(dim=bg.domain_dim, levels=bg.W.levels,
                          weights=np.ones(bg.domain_dim), quadrant_rank=local_rank)
    sub = cones.SubspaceInQuadrant(ambient=ambient, basis=kernel)
    cert = position_certificate
    if cert is None:
        cert = cones.is_good_position(sub)
    if not getattr(cert, "ok", False):
        raise PositionNotCertified("kernel is not certified to be in good position to the corner")
    structure = cones.quadrant_structure(sub, certified=True)

    comp = cert.complement if cert.complement is not None else orthonormal_columns(
        np.eye(bg.domain_dim) - kernel @ kernel.T
    )
    # transport the good complement back through (h, w) -> (h, w - delta'(0) h)
    T_inv = np.eye(bg.domain_dim)
    if wdim:
        T_inv[n:, :n] = -dp0
    nprime_comp = T_inv @ comp
    param_block = np.zeros((bg.domain_dim, n))
    param_block[:n, :n] = np.eye(n)
    M = subspace_intersection(nprime_comp, param_block)[: n, :]
    M = orthonormal_columns(M)
    if M.shape[1] != n - Nprime.shape[1]:
        M = orthonormal_columns(np.eye(n) - Nprime @ Nprime.T)

    def c_of_r(r_vec):
        if M.shape[1] == 0:
            return np.zeros(n)
        z = _newton(lambda z: G(r_vec + M @ z), np.zeros(M.shape[1]))
        return M @ z

    def theta(r_vec):
        v = r_vec + c_of_r(r_vec)
        return np.concatenate([v, delta(v)])

    def a_map(t):
        """t: coefficients in the kernel basis; returns the complement part.

        Theta(sigma^-1 n) = n + A(n) exactly, with A(n) in the transported
        complement T(M) ⊕ W.
        """
        t = np.asarray(t, dtype=float)
        nvec = kernel @ t
        r_vec = (T_inv @ nvec)[:n]
        return theta(r_vec) - nvec

    def section(x):
        return bg.evaluate(x)

    # chart complement: transported M plus the fiber directions
    M_amb = np.zeros((bg.domain_dim, M.shape[1]))
    M_amb[:n, :] = M
    w_amb = np.zeros((bg.domain_dim, wdim))
    w_amb[n:, :] = np.eye(wdim)
    chart_comp = orthonormal_columns(np.hstack([T @ M_amb, w_amb]))

    r = radius
    for _ in range(max_shrinks):
        chart = GoodParametrization(
            base_point=q, kernel_basis=kernel,
            complement_basis=chart_comp,
            radius=r, section=section, a_map=a_map,
            structure=structure, ambient_rank=local_rank,
        )
        if _chart_invariants_hold(chart, residual_tol):
            return chart
        r /= 2.0
    raise NonConvergence("no radius satisfied the corner chart invariants")


@dataclass(frozen=True)
class SolutionAtlas:
    """Charts covering a solution set together with their overlap records."""

    charts: tuple
    overlaps: tuple = ()

    @property
    def dim(self) -> int:
        return self.charts[0].dim if self.charts else 0

    def verify_transitions(self, samples: int = 8, tol: float = 1e-8, seed: int = 5) -> bool:
        for i, j, zero in self.overlaps:
            tm = transition_map(self.charts[i], self.charts[j], zero)
            t0 = self.charts[j].kernel_basis.T @ (np.asarray(zero) - self.charts[j].base_point)
            rng = np.random.Generator(np.random.Philox(key=seed))
            for _ in range(samples):
                t = t0 + rng.uniform(-0.05, 0.05, size=self.charts[j].dim)
                if not (self.charts[j].domain_contains(t)):
                    continue
                s = tm(t)
                if not self.charts[i].domain_contains(s):
                    continue
                if tm.mismatch(t) > tol:
                    return False
        return True
