"""Contraction germs and the parameter-dependent fixed-point machinery.

A contraction germ packages a map B(v, u) that contracts in u near the
origin at every level; the induced equation u = B(v, u) has a unique local
solution u = delta(v) obtained by Picard iteration, with derivative

    delta'(v) = (I - D2B(v, delta(v)))^(-1) D1B(v, delta(v)).

Tangent lifting doubles parameter and solution spaces and has
(delta(v), delta'(v) b) as its solution, which iterates to higher order.

User-supplied maps must be pure functions of their arguments; under that
contract every operation here is safe for concurrent use (SolutionGerm's
cache only ever stores values a recomputation would reproduce).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import fd_jacobian
from .errors import NonConvergence, SingularLinearization
from .spaces import GradedSpace

DEFAULT_MAX_ITER = 10_000
DEFAULT_TOL = 1e-12
# slack over exact monotone decay to tolerate roundoff near the floating floor
RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class ContractionGerm:
    """The map B(v, u) with per-level contraction certificates.

    B takes (v, u) as 1-d float arrays and returns a solution_space vector.
    contraction_schedule maps level m -> (rho_m, r_m) with 0 < rho_m < 1 and
    neighborhood radius r_m > 0.  d1 and d2 are optional Jacobian callables
    (v, u) -> matrix; central finite differences are used when absent.
    """

    parameter_space: GradedSpace
    solution_space: GradedSpace
    B: object
    contraction_schedule: dict = field(default_factory=dict)
    d1: object = None
    d2: object = None

    def __post_init__(self):
        for m, (rho, r) in self.contraction_schedule.items():
            self.solution_space.check_level(m)
            if not 0.0 < rho < 1.0:
                raise ValueError(f"contraction factor at level {m} must be in (0,1), got {rho}")
            if r <= 0.0:
                raise ValueError(f"neighborhood radius at level {m} must be positive, got {r}")

    def evaluate(self, v, u):
        out = np.atleast_1d(np.asarray(self.B(np.asarray(v, float), np.asarray(u, float)), dtype=float))
        if out.shape != (self.solution_space.dim,):
            raise ValueError(f"B returned shape {out.shape}, expected ({self.solution_space.dim},)")
        return out

    def d1B(self, v, u):
        """Jacobian of B in the parameter slot, shape (solution_dim, parameter_dim)."""
        if self.d1 is not None:
            return np.atleast_2d(np.asarray(self.d1(v, u), dtype=float)).reshape(
                self.solution_space.dim, self.parameter_space.dim
            )
        return fd_jacobian(lambda vv: self.evaluate(vv, u), np.asarray(v, float)).reshape(
            self.solution_space.dim, self.parameter_space.dim
        )

    def d2B(self, v, u):
        """Jacobian of B in the solution slot, shape (solution_dim, solution_dim)."""
        if self.d2 is not None:
            return np.atleast_2d(np.asarray(self.d2(v, u), dtype=float)).reshape(
                self.solution_space.dim, self.solution_space.dim
            )
        return fd_jacobian(lambda uu: self.evaluate(v, uu), np.asarray(u, float)).reshape(
            self.solution_space.dim, self.solution_space.dim
        )

    def radius(self, m: int) -> float:
        if m in self.contraction_schedule:
            return self.contraction_schedule[m][1]
        return np.inf

    def rho(self, m: int) -> float | None:
        if m in self.contraction_schedule:
            return self.contraction_schedule[m][0]
        return None


def solve_germ(germ: ContractionGerm, v, m: int = 0, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER):
    """Unique local solution u of u = B(v, u) by Picard iteration from u = 0.

    Returns u with level_norm(u - B(v, u), m) <= tol.  Raises NonConvergence
    if max_iter is exhausted or the empirical step ratio reaches 1 before
    convergence, which signals that the map is not a contraction at (v, m).
    """
    germ.solution_space.check_level(m)
    v = np.asarray(v, dtype=float)
    r = germ.radius(m)
    level_v = min(m, germ.parameter_space.levels)
    if np.isfinite(r) and germ.parameter_space.dim and germ.parameter_space.level_norm(v, level_v) > r:
        raise NonConvergence(
            f"parameter point outside level-{m} neighborhood radius {r}", residual=None, iterations=0
        )
    u = np.zeros(germ.solution_space.dim)
    if germ.solution_space.dim == 0:
        return u
    prev_step = None
    for it in range(max_iter):
        u_next = germ.evaluate(v, u)
        step = germ.solution_space.level_norm(u - u_next, m)
        if step <= tol:
            return u_next
        if prev_step is not None and prev_step > 10.0 * tol and step > prev_step * (1.0 + RATIO_SLACK):
            raise NonConvergence(
                f"empirical contraction ratio {step / prev_step:.4f} >= 1 at iteration {it}",
                residual=step,
                iterations=it,
            )
        prev_step = step
        u = u_next
    raise NonConvergence(
        f"no fixed point after {max_iter} iterations (residual {prev_step:.3e})",
        residual=prev_step,
        iterations=max_iter,
    )


def germ_derivative(germ: ContractionGerm, v, tol: float = DEFAULT_TOL, m: int = 0):
    """delta'(v) = (I - D2B(v, delta(v)))^(-1) D1B(v, delta(v)).

    Returned as a (solution_dim, parameter_dim) matrix, i.e. it acts on
    parameter increments by matrix-vector product.
    """
    v = np.asarray(v, dtype=float)
    u = solve_germ(germ, v, m=m, tol=tol)
    D2 = germ.d2B(v, u)
    dim = germ.solution_space.dim
    if dim == 0:
        return np.zeros((0, germ.parameter_space.dim))
    L = np.eye(dim) - D2
    s = np.linalg.svd(L, compute_uv=False)
    if s[-1] <= 1e-14 * max(s[0], 1.0):
        raise SingularLinearization(
            f"I - D2B numerically singular (smallest singular value {s[-1]:.3e}); "
            "contraction certificate violated"
        )
    D1 = germ.d1B(v, u)
    return np.linalg.solve(L, D1)


@dataclass(frozen=True)
class SolutionGerm:
    """Cached evaluators v -> delta(v) and v -> delta'(v) for a germ."""

    germ: ContractionGerm
    level: int = 0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    _cache: dict = field(default_factory=dict, repr=False)

    def _key(self, v):
        return tuple(np.round(np.asarray(v, dtype=float), 12))

    def __call__(self, v):
        key = self._key(v)
        hit = self._cache.get(key)
        if hit is None:
            hit = solve_germ(self.germ, v, m=self.level, tol=self.tol, max_iter=self.max_iter)
            self._cache[key] = hit
        return hit

    def derivative(self, v):
        key = ("d", self._key(v))
        hit = self._cache.get(key)
        if hit is None:
            hit = germ_derivative(self.germ, v, tol=self.tol, m=self.level)
            self._cache[key] = hit
        return hit


def _doubled_space(space: GradedSpace) -> GradedSpace:
    return GradedSpace(
        dim=2 * space.dim,
        levels=space.levels,
        weights=np.concatenate([space.weights, space.weights]),
        quadrant_rank=space.quadrant_rank,
    )


def tangent_germ(germ: ContractionGerm, solution: SolutionGerm | None = None) -> ContractionGerm:
    """Lift to doubled spaces: B1((v,b),(u,w)) = (B(v,u), DB(v,delta(v))(b,w)).

    The derivative block is evaluated at the solution delta(v), so the lifted
    germ contracts with the same per-level factors and its solution equals
    (delta(v), delta'(v) b).
    """
    if solution is None:
        solution = SolutionGerm(germ)
    pdim = germ.parameter_space.dim
    sdim = germ.solution_space.dim

    def lifted(vb, uw):
        v, b = vb[:pdim], vb[pdim:]
        u, w = uw[:sdim], uw[sdim:]
        du = germ.evaluate(v, u)
        ustar = solution(v)
        dw = germ.d1B(v, ustar) @ b + germ.d2B(v, ustar) @ w
        return np.concatenate([du, dw])

    M = germ.solution_space.levels
    schedule = {}
    for m, (rho, r) in germ.contraction_schedule.items():
        rho_up = germ.contraction_schedule.get(min(m + 1, M), (rho, r))[0]
        # the tangent direction enters linearly, so the parameter-radius
        # guard cannot be expressed in the doubled norm; the contraction
        # factor is inherited, the radius is left unguarded
        schedule[m] = (max(rho, rho_up), np.inf)
    return ContractionGerm(
        parameter_space=_doubled_space(germ.parameter_space),
        solution_space=_doubled_space(germ.solution_space),
        B=lifted,
        contraction_schedule=schedule,
    )


def iterate_tangent(germ: ContractionGerm, solution: SolutionGerm | None = None, j: int = 1) -> ContractionGerm:
    """j-fold tangent lift; j = 0 returns the input germ unchanged.

    Jacobians beyond the user-supplied order fall back to finite differences,
    so accuracy degrades with j (j <= 2 is supported at full tolerance).
    """
    if j < 0:
        raise ValueError("order j must be nonnegative")
    current = germ
    current_solution = solution
    for _ in range(j):
        current = tangent_germ(current, current_solution)
        current_solution = None
    return current


@dataclass(frozen=True)
class SamplingPlan:
    """Deterministic sampling grid for empirical contraction certificates."""

    parameter_samples: int = 8
    pair_samples: int = 32
    radius_scale: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ContractionReport:
    level: int
    max_ratio: float
    samples: int
    radius: float
    passed: bool


def verify_contraction(germ: ContractionGerm, m: int = 0, grid: SamplingPlan | None = None) -> ContractionReport:
    """Empirical Lipschitz-in-u ratio of B at level m over a sampled grid.

    Reports max ||B(v,u) - B(v,u')||_m / ||u - u'||_m over parameter and pair
    samples inside the level-m ball; passes iff the maximum is < 1.
    """
    germ.solution_space.check_level(m)
    if grid is None:
        grid = SamplingPlan()
    rng = np.random.Generator(np.random.Philox(key=grid.seed))
    r = germ.radius(m)
    if not np.isfinite(r):
        r = 1.0
    r *= grid.radius_scale
    pdim, sdim = germ.parameter_space.dim, germ.solution_space.dim
    max_ratio = 0.0
    count = 0
    for _ in range(grid.parameter_samples):
        v = rng.uniform(-r, r, size=pdim)
        nq = germ.parameter_space.quadrant_rank
        if nq:
            v[:nq] = np.abs(v[:nq])
        for _ in range(grid.pair_samples):
            u = rng.uniform(-r, r, size=sdim)
            u2 = rng.uniform(-r, r, size=sdim)
            den = germ.solution_space.level_norm(u - u2, m)
            if den < 1e-14:
                continue
            num = germ.solution_space.level_norm(germ.evaluate(v, u) - germ.evaluate(v, u2), m)
            max_ratio = max(max_ratio, num / den)
            count += 1
    return ContractionReport(level=m, max_ratio=max_ratio, samples=count, radius=r, passed=max_ratio < 1.0)


def shrink_to_contraction(germ: ContractionGerm, m: int = 0, target_ratio: float = 0.9,
                          start_radius: float = 1.0, max_bisections: int = 40,
                          grid: SamplingPlan | None = None):
    """Bisect the sampling radius until the empirical ratio is below target.

    Returns (certified ContractionGerm with the schedule entry set, report).
    """
    base = grid or SamplingPlan()
    radius = start_radius
    last = None
    for _ in range(max_bisections):
        trial = replace(germ, contraction_schedule={**germ.contraction_schedule, m: (min(target_ratio, 0.999), radius)})
        report = verify_contraction(trial, m=m, grid=base)
        last = report
        if report.max_ratio < target_ratio:
            certified_rho = max(min(report.max_ratio, 0.999), 1e-12)
            out = replace(germ, contraction_schedule={**germ.contraction_schedule, m: (certified_rho, radius)})
            return out, report
        radius /= 2.0
    raise NonConvergence(
        f"no radius with contraction ratio < {target_ratio} found after {max_bisections} bisections",
        residual=None if last is None else last.max_ratio,
    )
