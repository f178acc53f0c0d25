"""The acceptance battery: one function per criterion, shared by the CLI
selftest command and the pytest acceptance module.

Every function returns a CriterionResult with named metrics; thresholds are
pinned here, not in the callers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cones, registry
from .degree import (
    DifferentialForm,
    compute_degree,
    enumerate_zeros,
    generic_perturbation,
    integrate_form,
    invariance_suite,
)
from .fredholm import BasicGerm, ScPlusSection, fredholm_index, index_from_linearization, perturb_normal_form
from .germs import SamplingPlan, SolutionGerm, germ_derivative, solve_germ, tangent_germ, verify_contraction
from .orientation import build_transport, continue_orientation, determinant_line, stabilize
from .solution import SolutionAtlas, build_boundary_parametrization, build_parametrization, recentre, transition_map
from .spaces import GradedSpace
from .splicing import degeneracy_index, linearize_filled

# frozen Picard oracle for u = 0.25 cos(u), iterated far past 1e-12
COS_GERM_DELTA0 = 0.2426746806408902
COS_GERM_DDELTA0 = 0.9433295276879645


@dataclass
class CriterionResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={v!r}" for k, v in sorted(self.metrics.items()))
        return f"{status} {self.name}: {parts}"


def _traced_solve(germ, v, m, tol=1e-12, max_iter=10_000):
    """Picard iteration that also reports the max step ratio."""
    u = np.zeros(germ.solution_space.dim)
    prev = None
    max_ratio = 0.0
    for _ in range(max_iter):
        nxt = germ.evaluate(v, u)
        step = germ.solution_space.level_norm(u - nxt, m)
        if prev is not None and prev > 10 * tol:
            max_ratio = max(max_ratio, step / prev)
        if step <= tol:
            return nxt, max_ratio
        prev = step
        u = nxt
    raise AssertionError("traced solve did not converge")


def criterion_1_germ_solver() -> CriterionResult:
    """Residuals at every level, convergence ratio, oracle values."""
    t0 = time.time()
    germ = registry.cos_germ()
    v0 = np.array([0.0])
    worst_res = 0.0
    worst_ratio = 0.0
    for m in range(germ.solution_space.levels + 1):
        u, ratio = _traced_solve(germ, v0, m, tol=1e-12)
        res = germ.solution_space.level_norm(u - germ.evaluate(v0, u), m)
        worst_res = max(worst_res, res)
        worst_ratio = max(worst_ratio, ratio)
    delta0 = solve_germ(germ, v0, m=0, tol=1e-13)[0]
    dd = germ_derivative(germ, v0, tol=1e-13)[0, 0]
    h = 1e-6
    fd = (solve_germ(germ, np.array([h]), tol=1e-13)[0] - solve_germ(germ, np.array([-h]), tol=1e-13)[0]) / (2 * h)
    rel_err = abs(dd - fd) / abs(fd)
    metrics = {
        "max_residual": worst_res,
        "max_ratio": worst_ratio,
        "delta0_error": abs(delta0 - COS_GERM_DELTA0),
        "derivative_rel_error": rel_err,
    }
    passed = (worst_res <= 1e-10 and worst_ratio <= 0.3
              and metrics["delta0_error"] <= 1e-9 and rel_err <= 1e-6)
    return CriterionResult("1-germ-solver", passed, metrics, time.time() - t0)


def criterion_2_tangent_coherence() -> CriterionResult:
    """Lifted germ solution equals (delta(v), delta'(v) b) at 100 samples."""
    t0 = time.time()
    germ = registry.cos_germ()
    sol = SolutionGerm(germ, tol=1e-13)
    lifted = tangent_germ(germ, sol)
    rng = np.random.Generator(np.random.Philox(key=21))
    worst = 0.0
    for _ in range(100):
        v = rng.uniform(-0.2, 0.2, size=1)
        b = rng.uniform(-1.0, 1.0, size=1)
        got = solve_germ(lifted, np.concatenate([v, b]), tol=1e-13)
        want = np.concatenate([sol(v), sol.derivative(v) @ b])
        worst = max(worst, float(np.max(np.abs(got - want))))
    passed = worst <= 1e-8
    return CriterionResult("2-tangent-coherence", passed, {"max_error": worst}, time.time() - t0)


def criterion_3_filler_equivalence() -> CriterionResult:
    """Zero sets of the spliced and filled sections agree; block structure."""
    t0 = time.time()
    fs = registry.rotating_line_filled_section()
    model = fs.model
    rng = np.random.Generator(np.random.Philox(key=33))
    worst_forward = 0.0   # every core zero fills to a filled zero
    worst_backward = 0.0  # every polished filled zero lies on the core with f = 0
    mag = lambda v: 1.0 + 0.3 * np.sin(v)
    for _ in range(1000):
        v = rng.uniform(-1.0, 1.0, size=1)
        c = mag(v[0]) * np.array([np.cos(v[0]), np.sin(v[0])])
        worst_forward = max(worst_forward, float(np.max(np.abs(fs.evaluate(v, c)))))
    from .degree import _gauss_newton
    from .errors import GermforgeError

    def guarded(x):
        # keep Newton inside the splicing parameter region
        if abs(x[0]) >= 1.15:
            return np.array([1e3, 1e3])
        return fs.evaluate_flat(x)

    for _ in range(200):
        x0 = np.concatenate([rng.uniform(-0.9, 0.9, size=1), rng.normal(size=2)])
        try:
            x, res, ok = _gauss_newton(guarded, x0)
        except GermforgeError:
            continue
        if not ok or res > 1e-11 or abs(x[0]) > 1.1:
            continue
        v, e = x[:1], x[1:]
        core_defect = float(np.max(np.abs(model.projection(v) @ e - e)))
        section_val = float(np.max(np.abs(fs.section_value(v, e))))
        worst_backward = max(worst_backward, core_defect, section_val)
    v0 = np.array([0.3])
    q = np.concatenate([v0, mag(0.3) * np.array([np.cos(0.3), np.sin(0.3)])])
    rep = linearize_filled(fs, q)
    metrics = {
        "zero_forward": worst_forward,
        "zero_backward": worst_backward,
        "off_diagonal": rep.off_diagonal_norm,
        "index_filled": rep.filled_index,
        "index_section": rep.section_index,
    }
    passed = (worst_forward <= 1e-9 and worst_backward <= 1e-9
              and rep.off_diagonal_norm <= 1e-9
              and rep.filled_index == rep.section_index
              and rep.filled_surjective == rep.section_surjective)
    return CriterionResult("3-filler-equivalence", passed, metrics, time.time() - t0)


def _random_linear_basic_germ(rng, n=3, N=1, wdim=2, levels=2, scale=0.2) -> BasicGerm:
    W = GradedSpace(dim=wdim, levels=levels, weights=np.ones(wdim))
    M = rng.normal(size=(N + wdim, n + wdim)) * scale
    M[N:, n:] += np.eye(wdim)

    def g(x, M=M):
        return M @ x

    return BasicGerm(n=n, k=min(1, n), N=N, W=W, g=g,
                     contraction_schedule={m: (0.6, 1.0) for m in range(levels + 1)})


def criterion_4_index_stability() -> CriterionResult:
    """Index n - N against SVD on 20 germs; normal form preserves it."""
    t0 = time.time()
    rng = np.random.Generator(np.random.Philox(key=44))
    index_ok = True
    for _ in range(20):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(0, n + 1))
        wdim = int(rng.integers(1, 3))
        bg = _random_linear_basic_germ(rng, n=n, N=N, wdim=wdim)
        if index_from_linearization(bg.jacobian_at_zero()) != fredholm_index(bg):
            index_ok = False
    stability_ok = True
    worst_ratio = 0.0
    for _ in range(20):
        bg = _random_linear_basic_germ(rng, scale=0.08)
        A = rng.normal(size=(bg.target_dim, bg.domain_dim)) * 0.2
        Q = rng.normal(size=(bg.target_dim, bg.domain_dim)) * 0.05

        def s_map(x, A=A, Q=Q):
            return A @ x + Q @ (x * x)

        s = ScPlusSection(section=s_map, levels=bg.W.levels)
        out, rep = perturb_normal_form(bg, s)
        worst_ratio = max(worst_ratio, rep.contraction_ratio)
        if fredholm_index(out) != fredholm_index(bg):
            stability_ok = False
        check = verify_contraction(out.inner, 0, SamplingPlan(seed=7))
        if check.max_ratio >= 0.9:
            stability_ok = False
            worst_ratio = max(worst_ratio, check.max_ratio)
    metrics = {"index_ok": index_ok, "stability_ok": stability_ok, "worst_ratio": worst_ratio}
    return CriterionResult("4-index-stability", index_ok and stability_ok and worst_ratio < 0.9,
                           metrics, time.time() - t0)


def criterion_5_cones() -> CriterionResult:
    t0 = time.time()
    rng = np.random.Generator(np.random.Philox(key=55))
    # neat => good position with c = 1 on 10^4-sample grids
    neat_ok = True
    for sub in registry.neat_instances():
        res = cones.is_neat(sub)
        if not res.neat:
            neat_ok = False
            continue
        bad = cones.check_position_pair(sub, res.complement, 1.0, grid=10_000, seed=3)
        if bad is not None:
            neat_ok = False
    # Krein-Milman reconstruction on registry pointed cones
    km_worst = 0.0
    for sub in (registry.diag_plane_subspace(), registry.diagonal_in_square(),
                registry.circular_cone_subspace()):
        rays = cones.extreme_rays(sub)
        for _ in range(1000):
            lam = np.abs(rng.normal(size=len(rays)))
            p = sum(l * r for l, r in zip(lam, rays))
            km_worst = max(km_worst, cones.cone_membership_residual(p, rays))
    # quadrant recognition
    quad_ok = True
    for t in range(20):
        T = rng.normal(size=(3, 3))
        while abs(np.linalg.det(T)) < 0.1:
            T = rng.normal(size=(3, 3))
        amb = GradedSpace(dim=3, levels=2, weights=np.ones(3), quadrant_rank=3)
        sub = cones.SubspaceInQuadrant(ambient=amb, basis=np.linalg.inv(T))
        if not cones.is_quadrant(sub).is_quadrant:
            quad_ok = False
    ice_ok = not cones.is_quadrant(registry.circular_cone_subspace()).is_quadrant
    # sigma invariant on good-position instances
    sigma_ok = True
    for sub in (registry.diag_plane_subspace(), registry.diagonal_in_square()):
        for ray in cones.extreme_rays(sub):
            if len(cones.sigma_set(ray, sub.n, tol=1e-8)) != sub.dim - 1:
                sigma_ok = False
    # round trips
    rt_worst = 0.0
    for sub in (registry.diag_plane_subspace(), registry.diagonal_in_square()):
        qs = cones.quadrant_structure(sub, certified=True)
        for _ in range(200):
            lam = np.abs(rng.normal(size=len(qs.rays)))
            x = sum(l * r for l, r in zip(lam, qs.rays))
            back = qs.from_standard @ (qs.to_standard @ x)
            rt_worst = max(rt_worst, float(np.max(np.abs(back - x))))
    metrics = {
        "neat_ok": neat_ok, "km_worst": km_worst, "quad_ok": quad_ok,
        "ice_ok": ice_ok, "sigma_ok": sigma_ok, "round_trip": rt_worst,
    }
    passed = neat_ok and km_worst <= 1e-8 and quad_ok and ice_ok and sigma_ok and rt_worst <= 1e-10
    return CriterionResult("5-cones", passed, metrics, time.time() - t0)


def criterion_6_parametrization() -> CriterionResult:
    t0 = time.time()
    bg = registry.circle_basic_germ()
    chart = build_parametrization(bg, np.array([1.0, 0.0]), radius=0.75)
    a = chart.a_vector(np.array([0.6]))
    a_err = float(np.max(np.abs(a - np.array([-0.2, 0.0]))))

    charts = [chart,
              build_parametrization(bg, np.array([0.0, 1.0]), radius=0.75),
              build_parametrization(bg, np.array([-1.0, 0.0]), radius=0.75),
              build_parametrization(bg, np.array([0.0, -1.0]), radius=0.75)]
    worst_res = 0.0
    worst_da0 = 0.0
    for c in charts:
        for t in c.domain_samples(25, seed=9):
            worst_res = max(worst_res, c.residual(t))
        for j in range(c.dim):
            e = np.zeros(c.dim)
            e[j] = 1e-5
            da = (c.a_vector(e) - c.a_vector(-e)) / 2e-5
            worst_da0 = max(worst_da0, float(np.max(np.abs(da))))
    # transitions: chart vs its recentring
    rec = recentre(chart, np.array([0.4]))
    tm = transition_map(chart, rec, rec.base_point)
    trans_worst = 0.0
    for tval in np.linspace(-0.05, 0.05, 9):
        trans_worst = max(trans_worst, tm.mismatch(np.array([tval])))

    # boundary chart on y - x^2 at the corner
    pb = registry.parabola_corner_germ()
    bchart = build_boundary_parametrization(pb, np.zeros(2), radius=0.4)
    parab_worst = 0.0
    corner_ok = True
    amb = GradedSpace(dim=2, levels=3, quadrant_rank=1)
    for t in bchart.domain_samples(40, seed=13):
        g = bchart.gamma(t)
        parab_worst = max(parab_worst, abs(g[1] - g[0] ** 2))
        n = bchart.kernel_basis @ t
        s = bchart.structure.to_standard @ n
        active = int(np.sum(np.abs(s[: bchart.structure.quadrant_count]) <= 1e-9))
        if degeneracy_index(g, amb) != active:
            corner_ok = False
    # the corner itself
    g0 = bchart.gamma(np.zeros(1))
    if degeneracy_index(g0, amb) != 1:
        corner_ok = False
    metrics = {
        "circle_a_error": a_err, "max_residual": worst_res, "max_da0": worst_da0,
        "transition_worst": trans_worst, "parabola_error": parab_worst, "corner_ok": corner_ok,
    }
    passed = (a_err <= 1e-9 and worst_res <= 1e-8 and worst_da0 <= 1e-6
              and trans_worst <= 1e-8 and parab_worst <= 1e-8 and corner_ok)
    return CriterionResult("6-parametrization", passed, metrics, time.time() - t0)


def criterion_7_orientation() -> CriterionResult:
    t0 = time.time()
    # worked stabilization example
    dl = determinant_line(np.diag([1.0, 0.0]))
    hand = stabilize(dl, np.diag([1.0, 0.0])).sign
    # projection independence against dense determinant oracle
    from .orientation import bordered_sign

    rng = np.random.Generator(np.random.Philox(key=77))
    proj_ok = True
    for _ in range(20):
        n = 4
        A = rng.normal(size=(n, n))
        U, s, Vt = np.linalg.svd(A)
        s[-1] = 0.0
        T = U @ np.diag(s) @ Vt
        dlT = determinant_line(T)
        signs, oracles = [], []
        while len(signs) < 2:
            w = rng.normal(size=n)
            w /= np.linalg.norm(w)
            P = np.eye(n) - np.outer(w, w)
            try:
                st = stabilize(dlT, P)
            except Exception:
                continue
            signs.append(st.sign)
            oracles.append(bordered_sign(P @ T, st.kernel_basis, st.complement_basis))
        if signs[0] * signs[1] != oracles[0] * oracles[1]:
            proj_ok = False
    # spectral flow and refinement stability
    flow_signs = []
    for count in (17, 33, 65):
        ts = np.linspace(0.0, 1.0, count)
        ops = [np.diag([1.0, 2 * t - 1.0]) for t in ts]
        tr = build_transport(ops, grid=ts)
        flow_signs.append(continue_orientation(tr, 1))
    rot_signs = []
    for count in (17, 33, 65):
        ts = np.linspace(0.0, 1.0, count)
        ops = [np.array([[np.cos(np.pi * t), -np.sin(np.pi * t)],
                         [np.sin(np.pi * t), np.cos(np.pi * t)]]) for t in ts]
        rot_signs.append(continue_orientation(build_transport(ops, grid=ts), 1))
    metrics = {
        "hand_sign": hand, "projection_ok": proj_ok,
        "flow_signs": tuple(flow_signs), "rotation_signs": tuple(rot_signs),
    }
    passed = (hand == 1 and proj_ok and all(s == -1 for s in flow_signs)
              and all(s == 1 for s in rot_signs))
    return CriterionResult("7-orientation", passed, metrics, time.time() - t0)


def criterion_8_degree() -> CriterionResult:
    t0 = time.time()
    cubic = registry.cubic_problem(seed=8, budget=0.1)
    deg_cubic = compute_degree(cubic)
    sq = registry.square_minus_one_problem(seed=9, budget=0.1)
    deg_sq = compute_degree(sq)
    violations = 0
    try:
        rep = invariance_suite(cubic, trials=50,
                               homotopy_shift=lambda t, x: np.array([0.05 * t]))
        trials_deg = rep.degree
    except Exception:
        violations = 1
        trials_deg = None
    metrics = {"deg_cubic": deg_cubic, "deg_square": deg_sq,
               "violations": violations, "suite_degree": trials_deg}
    passed = deg_cubic == 1 and deg_sq == 0 and violations == 0 and trials_deg == 1
    return CriterionResult("8-degree", passed, metrics, time.time() - t0)


def _circle_atlas():
    bg = registry.circle_basic_germ()
    bases = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
             np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    return SolutionAtlas(charts=tuple(build_parametrization(bg, q, radius=0.75) for q in bases))


def criterion_9_form_integration() -> CriterionResult:
    t0 = time.time()
    atlas = _circle_atlas()
    omega = DifferentialForm(degree=1, coeff=lambda x: np.array([-x[1], x[0]]))
    circ = integrate_form(atlas, omega)
    exact = DifferentialForm(degree=1, coeff=lambda x: np.array([x[1], x[0]]))
    zero = integrate_form(atlas, exact)
    metrics = {"circumference_error": abs(circ - 2 * np.pi), "exact_form": abs(zero)}
    passed = metrics["circumference_error"] <= 1e-6 and metrics["exact_form"] <= 1e-8
    return CriterionResult("9-form-integration", passed, metrics, time.time() - t0)


def _determinism_probe(seed: int) -> str:
    """A canonical metric table formatted to full precision."""
    germ = registry.cos_germ()
    rows = []
    delta0 = solve_germ(germ, np.array([0.0]), tol=1e-13)[0]
    rows.append(("delta0", repr(delta0)))
    rows.append(("derivative", repr(germ_derivative(germ, np.array([0.0]))[0, 0])))
    pp = registry.cubic_problem(seed=seed)
    rows.append(("degree", repr(compute_degree(pp))))
    zs = enumerate_zeros(pp)
    for i, z in enumerate(zs):
        rows.append((f"zero{i}", repr(float(z.point[0]))))
    rep = verify_contraction(germ, 0, SamplingPlan(seed=seed))
    rows.append(("ratio", repr(rep.max_ratio)))
    return "\n".join(f"{k},{v}" for k, v in rows)


def criterion_10_determinism() -> CriterionResult:
    t0 = time.time()
    a = _determinism_probe(123)
    b = _determinism_probe(123)
    passed = a.encode() == b.encode()
    return CriterionResult("10-determinism", passed, {"bytes_equal": passed}, time.time() - t0)


ALL_CRITERIA = (
    criterion_1_germ_solver,
    criterion_2_tangent_coherence,
    criterion_3_filler_equivalence,
    criterion_4_index_stability,
    criterion_5_cones,
    criterion_6_parametrization,
    criterion_7_orientation,
    criterion_8_degree,
    criterion_9_form_integration,
    criterion_10_determinism,
)


def run_all(echo=None) -> list:
    results = []
    for fn in ALL_CRITERIA:
        res = fn()
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
