import numpy as np
import pytest

from germforge import registry
from germforge.degree import (
    AuxiliaryNorm,
    DifferentialForm,
    PerturbationProblem,
    Window,
    atlas_covers_points,
    compute_degree,
    enumerate_zeros,
    generic_perturbation,
    integrate_form,
    invariance_suite,
    make_bump_section,
    smooth_plateau,
)
from germforge.errors import BudgetExceeded, DimensionUnsupported, IndexMismatch, WindowEscape
from germforge.orientation import OrientationReference
from germforge.solution import SolutionAtlas, build_parametrization
from germforge.spaces import GradedSpace

FIBER = GradedSpace(dim=1, levels=3, weights=np.array([1.0]))


def problem(f, lo, hi, seeds=(), seed=0, budget=1.0, rank=0):
    return PerturbationProblem(
        section=f,
        window=Window(lo=np.asarray(lo, dtype=float), hi=np.asarray(hi, dtype=float)),
        aux_norm=AuxiliaryNorm(fiber_space=FIBER),
        budget=budget,
        seeds=tuple(np.asarray(s, dtype=float) for s in seeds),
        rng_seed=seed,
        quadrant_rank=rank,
    )


def test_plateau_shape():
    assert smooth_plateau(0.0) == 1.0
    assert smooth_plateau(0.5) == 1.0
    assert smooth_plateau(1.0) == 0.0
    assert 0.0 < smooth_plateau(0.75) < 1.0
    vals = [smooth_plateau(u) for u in np.linspace(0.5, 1.0, 50)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_bump_section_zero_value():
    aux = AuxiliaryNorm(fiber_space=FIBER)
    s = make_bump_section(np.zeros(1), np.zeros(1), 1.0, 0.5, aux, levels=3)
    for x in np.linspace(-2, 2, 11):
        assert np.max(np.abs(s(np.array([x])))) == 0.0


def test_bump_section_exact_value_and_support():
    aux = AuxiliaryNorm(fiber_space=FIBER)
    x0 = np.array([0.2])
    h0 = np.array([0.5])
    s = make_bump_section(x0, h0, 1.0, 0.6, aux, levels=3)
    assert np.allclose(s(x0), h0)
    assert s.output_level(0) == 1
    assert np.max(np.abs(s(np.array([2.0])))) == 0.0
    # the plateau never exceeds 1, so the budget norm is dominated by h0's
    for x in np.linspace(-1.5, 1.5, 41):
        assert aux(np.array([x]), s(np.array([x]))) <= aux(x0, h0) + 1e-15


def test_bump_section_budget_guard():
    aux = AuxiliaryNorm(fiber_space=FIBER)
    with pytest.raises(BudgetExceeded):
        make_bump_section(np.zeros(1), np.array([2.0]), 1.0, 0.5, aux, levels=3)


def test_bump_section_respects_fiber_projection():
    fiber2 = GradedSpace(dim=2, levels=3)
    aux = AuxiliaryNorm(fiber_space=fiber2)
    model = registry.rotating_line_model()
    rho = lambda y: model.projection(y[:1])
    x0 = np.array([0.3, 0.0, 0.0])
    h0 = model.projection(np.array([0.3])) @ np.array([1.0, 0.3])
    s = make_bump_section(x0, h0, 0.5, 5.0, aux, levels=3, fiber_projection=rho)
    assert np.max(np.abs(s(x0) - h0)) < 1e-12
    for _ in range(20):
        y = x0 + np.random.default_rng(5).normal(size=3) * 0.1
        val = s(y)
        assert np.max(np.abs(rho(y) @ val - val)) < 1e-12


def test_enumerate_zeros_identity():
    pp = problem(lambda x: np.array([x[0]]), [-2], [2], seeds=([0.5],))
    zs = enumerate_zeros(pp)
    assert len(zs) == 1
    assert abs(zs[0].point[0]) < 1e-12


def test_enumerate_zeros_cubic_matches_bisection_oracle():
    f = lambda x: np.array([x[0] ** 3 - x[0]])
    pp = problem(f, [-2], [2], seeds=([-1.5], [0.2], [1.4]))
    zs = enumerate_zeros(pp)
    # bisection oracle on sign changes over the window
    xs = np.linspace(-2, 2, 400)
    oracle = []
    for a, b in zip(xs, xs[1:]):
        fa, fb = f(np.array([a]))[0], f(np.array([b]))[0]
        if fa == 0.0:
            oracle.append(a)
        if fa * fb < 0:
            lo, hi = a, b
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if f(np.array([lo]))[0] * f(np.array([mid]))[0] <= 0:
                    hi = mid
                else:
                    lo = mid
            oracle.append(0.5 * (lo + hi))
    assert len(zs) == len(oracle) == 3
    for z, o in zip(zs, sorted(oracle)):
        assert abs(z.point[0] - o) < 1e-8
        assert z.residual <= 1e-10


def test_enumerate_zeros_empty_for_positive_function():
    pp = problem(lambda x: np.array([x[0] ** 2 + 1.0]), [-2], [2])
    assert enumerate_zeros(pp) == []


def test_window_escape_detected():
    # zero at 3.0 sits outside the declared window: the model is not proper on it
    pp = problem(lambda x: np.array([x[0] - 3.0]), [-2], [2], seeds=([1.9],))
    with pytest.raises(WindowEscape):
        enumerate_zeros(pp)


def test_generic_perturbation_accepts_transversal_sections():
    pp = problem(lambda x: np.array([x[0] ** 3 - x[0]]), [-2], [2], seeds=([-1.5], [0.2], [1.4]))
    out = generic_perturbation(pp)
    assert out.lambdas.size == 0
    assert len(out.zeros) == 3


def test_generic_perturbation_splits_degenerate_zero():
    pp = problem(lambda x: np.array([x[0] ** 2]), [-1], [1], seeds=([0.0],), budget=0.1, seed=5)
    out = generic_perturbation(pp)
    # x^2 + c either splits into two transversal zeros or has none
    assert len(out.zeros) in (0, 2)
    for z in out.zeros:
        assert z.surjective
    assert compute_degree(pp) == 0


def test_boundary_avoiding_perturbation_support():
    # degenerate interior zero on a quadrant problem: the fix must not touch
    # the boundary face
    f = lambda x: np.array([(x[0] - 0.5) ** 2])
    pp = problem(f, [0.0], [1.0], seeds=([0.5],), budget=0.2, rank=1, seed=6)
    out = generic_perturbation(pp, mode="interior_only")
    s = out.perturbation
    for eps in (1e-4, 1e-3, 0.05):
        assert not s.support_contains(np.array([eps]))
        assert np.max(np.abs(s(np.array([eps])))) == 0.0


def test_boundary_avoiding_fails_loud_for_degenerate_boundary_zero():
    from germforge.errors import RetryExhausted

    f = lambda x: np.array([x[0] ** 2])
    pp = problem(f, [0.0], [1.0], seeds=([0.0],), budget=0.2, rank=1, seed=7)
    with pytest.raises(RetryExhausted):
        generic_perturbation(pp, mode="interior_only")


def test_boundary_mode_corner_transversality():
    pp = registry.boundary_parabola_problem()
    out = generic_perturbation(pp, mode="full_boundary")
    assert out.zeros
    for z in out.zeros:
        assert z.surjective
    corner = [z for z in out.zeros if abs(z.point[0]) <= 1e-9]
    assert corner
    # kernel at the corner is transversal to the boundary tangent
    z = corner[0]
    tangent = np.eye(2)[:, 1:]
    stacked = np.hstack([z.kernel_basis, tangent])
    assert np.linalg.matrix_rank(stacked, tol=1e-8) == 2


def test_degree_examples():
    assert compute_degree(problem(lambda x: np.array([x[0]]), [-2], [2], seeds=([0.5],))) == 1
    assert compute_degree(problem(lambda x: np.array([x[0] ** 3 - x[0]]), [-2], [2],
                                  seeds=([-1.5], [0.2], [1.4]))) == 1
    assert compute_degree(problem(lambda x: np.array([x[0] ** 2 - 1.0]), [-2], [2],
                                  seeds=([-1.3], [1.3]))) == 0
    assert compute_degree(problem(lambda x: np.array([-x[0]]), [-2], [2], seeds=([0.5],))) == -1


def test_degree_deterministic_given_seed():
    a = compute_degree(registry.cubic_problem(seed=7))
    b = compute_degree(registry.cubic_problem(seed=7))
    assert a == b == 1


def test_degree_index_mismatch():
    f = lambda x: np.array([x[0]])  # 1 output, 2 inputs
    pp = problem(f, [-1, -1], [1, 1], seeds=([0.5, 0.5],))
    with pytest.raises(IndexMismatch):
        compute_degree(pp)


def test_degree_with_base_zero_reference():
    pp = registry.cubic_problem(seed=3)
    ref = OrientationReference(kind="base_zero", base_point=np.array([-1.0]))
    assert compute_degree(pp, reference=ref) == 1


def test_invariance_suite_linear():
    pp = registry.identity_problem(seed=2)
    rep = invariance_suite(pp, trials=10)
    assert rep.degree == 1
    assert all(d == 1 for d in rep.trial_degrees)


def test_invariance_suite_cubic_with_homotopy():
    pp = registry.cubic_problem(seed=4, budget=0.1)
    rep = invariance_suite(pp, trials=50, homotopy_shift=lambda t, x: np.array([0.05 * t]))
    assert rep.degree == 1
    assert len(rep.trial_degrees) == 50
    assert all(d == 1 for d in rep.trial_degrees)
    assert rep.homotopy_degrees and all(d == 1 for _, d in rep.homotopy_degrees)


def circle_atlas():
    bg = registry.circle_basic_germ()
    bases = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
             np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    return SolutionAtlas(charts=tuple(build_parametrization(bg, q, radius=0.75) for q in bases))


def test_atlas_covers_circle():
    atlas = circle_atlas()
    pts = [np.array([np.cos(a), np.sin(a)]) for a in np.linspace(0, 2 * np.pi, 73)]
    assert atlas_covers_points(atlas, pts)


def test_partition_of_unity_normalizes():
    from germforge.degree import _chart_weight

    atlas = circle_atlas()
    for a in np.linspace(0, 2 * np.pi, 37):
        x = np.array([np.cos(a), np.sin(a)])
        weights = [_chart_weight(c, x, 0.95) for c in atlas.charts]
        total = sum(weights)
        assert total > 0
        normalized = [w / total for w in weights]
        assert abs(sum(normalized) - 1.0) < 1e-12


def test_zero_form_counts_signed_points():
    # 0-dimensional atlas from the cubic's zeros: Phi([1]) = degree
    pp = registry.cubic_problem(seed=1)
    zs = enumerate_zeros(pp)
    from germforge.solution import GoodParametrization

    charts = []
    for z in zs:
        charts.append(GoodParametrization(
            base_point=z.point, kernel_basis=np.zeros((1, 0)),
            complement_basis=np.eye(1), radius=0.1,
            section=pp.section, a_map=lambda t: np.zeros(1),
        ))
    atlas = SolutionAtlas(charts=tuple(charts))
    one = DifferentialForm(degree=0, coeff=lambda x: 1.0)
    val = integrate_form(atlas, one)
    assert val == pytest.approx(compute_degree(pp))


def test_circumference_integral():
    atlas = circle_atlas()
    omega = DifferentialForm(degree=1, coeff=lambda x: np.array([-x[1], x[0]]))
    val = integrate_form(atlas, omega)
    assert abs(val - 2 * np.pi) <= 1e-6


def test_exact_form_integrates_to_zero():
    atlas = circle_atlas()
    d_xy = DifferentialForm(degree=1, coeff=lambda x: np.array([x[1], x[0]]))
    assert abs(integrate_form(atlas, d_xy)) <= 1e-8


def test_quadrature_refinement_stable():
    atlas = circle_atlas()
    omega = DifferentialForm(degree=1, coeff=lambda x: np.array([-x[1], x[0]]))
    a = integrate_form(atlas, omega, nodes_per_axis=320)
    b = integrate_form(atlas, omega, nodes_per_axis=640)
    assert abs(a - b) < 1e-6


def test_sphere_area_two_form():
    # f(x) = |x|^2 - 1 in R^3: a 2-dimensional zero set; the area form
    # p . (u x v) integrates to 4 pi (divergence-theorem oracle)
    from germforge.fredholm import BasicGerm

    W = GradedSpace(dim=0, levels=3)
    bg = BasicGerm(n=3, k=0, N=1, W=W, g=lambda x: np.array([x @ x - 1.0]))
    bases = [np.array(b, dtype=float) for b in
             [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    atlas = SolutionAtlas(charts=tuple(build_parametrization(bg, q, radius=0.9) for q in bases))
    rng = np.random.default_rng(0)
    pts = []
    for _ in range(200):
        p = rng.normal(size=3)
        pts.append(p / np.linalg.norm(p))
    assert atlas_covers_points(atlas, pts)

    def area_coeff(p):
        return np.array([[0.0, p[2], -p[1]], [-p[2], 0.0, p[0]], [p[1], -p[0], 0.0]])

    omega = DifferentialForm(degree=2, coeff=area_coeff)
    val = integrate_form(atlas, omega, nodes_per_axis=32)
    assert abs(val - 4 * np.pi) < 2e-2


def test_form_degree_guard():
    atlas = circle_atlas()
    with pytest.raises(DimensionUnsupported):
        integrate_form(atlas, DifferentialForm(degree=3, coeff=lambda x: None))


def test_incomplete_atlas_detected():
    from germforge.errors import AtlasIncomplete

    full = circle_atlas()
    holed = SolutionAtlas(charts=full.charts[:3])  # drop the bottom chart
    omega = DifferentialForm(degree=1, coeff=lambda x: np.array([-x[1], x[0]]))
    pts = [np.array([np.cos(a), np.sin(a)]) for a in np.linspace(0, 2 * np.pi, 73)]
    with pytest.raises(AtlasIncomplete):
        integrate_form(holed, omega, cover_points=pts, nodes_per_axis=8)
    # the full atlas passes the same coverage gate
    val = integrate_form(full, omega, cover_points=pts)
    assert abs(val - 2 * np.pi) <= 1e-6


def test_mismatched_degree_contributes_zero():
    atlas = circle_atlas()  # 1-dimensional charts
    zero_form = DifferentialForm(degree=0, coeff=lambda x: 1.0)
    assert integrate_form(atlas, zero_form) == 0.0
