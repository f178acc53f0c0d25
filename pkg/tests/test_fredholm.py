import numpy as np
import pytest

from germforge.errors import DegenerateSplitting, MismatchAtPoint
from germforge.fredholm import (
    BasicGerm,
    ScPlusSection,
    fredholm_index,
    index_from_linearization,
    linearize_relative,
    perturb_normal_form,
)
from germforge.germs import SamplingPlan, verify_contraction
from germforge.spaces import GradedSpace


def make_linear_basic_germ(rng, n, N, wdim, levels=2, scale=0.15):
    W = GradedSpace(dim=wdim, levels=levels, weights=np.ones(wdim))
    M = rng.normal(size=(N + wdim, n + wdim)) * scale
    M[N:, n:] += np.eye(wdim)

    def g(x, M=M):
        return M @ x

    return BasicGerm(n=n, k=min(1, n), N=N, W=W, g=g,
                     contraction_schedule={m: (0.7, 1.0) for m in range(levels + 1)})


def test_index_formula_examples():
    rng = np.random.default_rng(0)
    bg = make_linear_basic_germ(rng, n=3, N=1, wdim=2)
    assert fredholm_index(bg) == 2
    bg2 = make_linear_basic_germ(rng, n=2, N=2, wdim=1)
    assert fredholm_index(bg2) == 0


def test_index_matches_svd_on_random_germs():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(0, n + 1))
        wdim = int(rng.integers(1, 3))
        bg = make_linear_basic_germ(rng, n=n, N=N, wdim=wdim)
        assert index_from_linearization(bg.jacobian_at_zero()) == n - N


def test_inner_contraction_certificate():
    rng = np.random.default_rng(2)
    bg = make_linear_basic_germ(rng, n=2, N=1, wdim=2)
    for m in range(bg.W.levels + 1):
        rep = verify_contraction(bg.inner, m, SamplingPlan(seed=5))
        assert rep.passed


def test_linearize_relative_plain_jacobian():
    f = lambda x: np.array([x[0] ** 2 + x[1], x[0] - x[1]])
    s = ScPlusSection(section=lambda x: np.zeros(2), levels=3)
    q = np.zeros(2)
    J = linearize_relative(f, s, q)
    assert np.allclose(J, [[0.0, 1.0], [1.0, -1.0]], atol=1e-8)


def test_linearize_relative_constant_section():
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    f = lambda x: A @ x + np.array([3.0, -1.0])
    q = np.array([0.5, 0.5])
    s = ScPlusSection(section=lambda x, val=f(q): val, levels=3)
    J = linearize_relative(f, s, q)
    assert np.allclose(J, A, atol=1e-8)


def test_linearize_relative_mismatch_raises():
    f = lambda x: np.array([x[0]])
    s = ScPlusSection(section=lambda x: np.array([1.0]), levels=3)
    with pytest.raises(MismatchAtPoint):
        linearize_relative(f, s, np.zeros(1))


def test_relative_linearizations_share_index():
    # two distinct quadratic sections agreeing with f at q
    f = lambda x: np.array([x[0] + x[1] ** 2, x[0] - x[1]])
    q = np.array([0.2, -0.1])
    fq = f(q)

    def quad1(x):
        d = x - q
        return fq + np.array([d[0] ** 2, d[1] ** 2])

    def quad2(x):
        d = x - q
        return fq + np.array([3 * d[0] * d[1], -(d[0] ** 2)])

    s1 = ScPlusSection(section=quad1, levels=3)
    s2 = ScPlusSection(section=quad2, levels=3)
    J1 = linearize_relative(f, s1, q)
    J2 = linearize_relative(f, s2, q)
    assert index_from_linearization(J1) == index_from_linearization(J2)


def test_sc_plus_level_bookkeeping():
    s = ScPlusSection(section=lambda x: np.zeros(1), levels=3)
    assert s.output_level(0) == 1
    assert s.output_level(2) == 3
    assert s.output_level(3) == 3


def base_germ_for_stability(levels=2):
    W = GradedSpace(dim=1, levels=levels, weights=np.array([1.0]))
    return BasicGerm(n=1, k=0, N=0, W=W, g=lambda x: np.array([x[1]]),
                     contraction_schedule={m: (1e-6, 1.0) for m in range(levels + 1)})


def test_normal_form_identity_perturbation():
    bg = base_germ_for_stability()
    s = ScPlusSection(section=lambda x: np.array([0.0]), levels=2)
    out, rep = perturb_normal_form(bg, s)
    assert (out.n, out.N, out.W.dim) == (bg.n, bg.N, bg.W.dim)
    assert rep.kernel_dim == 0
    # the inner contraction map is unchanged: B = 0
    x = np.array([0.3, 0.4])
    assert np.max(np.abs(out.inner.evaluate(x[:1], x[1:]))) < 1e-9


def test_normal_form_half_shrink():
    # B = 0, s = (0, 0.5 w): kernel-free splitting, L = 1.5, B_hat = 0
    bg = base_germ_for_stability()
    s = ScPlusSection(section=lambda x: np.array([0.5 * x[1]]), levels=2)
    out, rep = perturb_normal_form(bg, s)
    assert rep.kernel_dim == 0
    assert fredholm_index(out) == fredholm_index(bg) == 1
    assert np.max(np.abs(out.inner.evaluate(np.array([0.2]), np.array([0.3])))) < 1e-8


def test_normal_form_full_kernel_absorption():
    # s = (0, -w): 1 + A = 0, the parameter block absorbs all of w
    bg = base_germ_for_stability()
    s = ScPlusSection(section=lambda x: np.array([-x[1]]), levels=2)
    out, rep = perturb_normal_form(bg, s)
    assert rep.kernel_dim == 1
    assert out.W.dim == 0
    assert out.n == bg.n + 1 and out.N == bg.N + 1
    assert fredholm_index(out) == fredholm_index(bg)


def test_normal_form_degenerate_splitting_detected():
    bg = base_germ_for_stability()
    # A = -1 + 5e-8 puts 1 + A inside the ambiguity band [1e-8, 1e-7]
    s = ScPlusSection(section=lambda x: np.array([(-1.0 + 5e-8) * x[1]]), levels=2)
    with pytest.raises(DegenerateSplitting):
        perturb_normal_form(bg, s)


def test_normal_form_index_preserved_on_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        bg = make_linear_basic_germ(rng, n=2, N=1, wdim=2, scale=0.08)
        A = rng.normal(size=(bg.target_dim, bg.domain_dim)) * 0.2
        Q = rng.normal(size=(bg.target_dim, bg.domain_dim)) * 0.05

        def s_map(x, A=A, Q=Q):
            return A @ x + Q @ (x * x)

        s = ScPlusSection(section=s_map, levels=bg.W.levels)
        out, rep = perturb_normal_form(bg, s)
        assert fredholm_index(out) == fredholm_index(bg)
        assert rep.contraction_ratio < 0.9
        for m in range(out.W.levels + 1):
            check = verify_contraction(out.inner, m, SamplingPlan(seed=11))
            assert check.max_ratio < 0.9


def test_normal_form_kernel_dim_matches_direct_svd():
    # conjugation by the fiber/base transformation preserves rank data
    rng = np.random.default_rng(4)
    for _ in range(10):
        bg = make_linear_basic_germ(rng, n=2, N=1, wdim=2, scale=0.08)
        A = rng.normal(size=(bg.target_dim, bg.domain_dim)) * 0.15

        def s_map(x, A=A):
            return A @ x

        s = ScPlusSection(section=s_map, levels=bg.W.levels)
        out, _ = perturb_normal_form(bg, s)
        from germforge._linalg import fd_jacobian, svd_split

        J_direct = fd_jacobian(lambda x: bg.evaluate(x) + s(x), np.zeros(bg.domain_dim))
        _, ker_direct, cok_direct, _ = svd_split(J_direct)
        _, ker_nf, cok_nf, _ = svd_split(out.jacobian_at_zero())
        assert ker_nf.shape[1] == ker_direct.shape[1]
        assert cok_nf.shape[1] == cok_direct.shape[1]
