import numpy as np
import pytest

from germforge.spaces import GradedSpace, level_norm, quadrant_membership


def test_zero_vector_norm_is_zero_at_every_level():
    sp = GradedSpace(dim=3, levels=4)
    z = sp.zero()
    for m in range(5):
        assert level_norm(z, m) == 0.0


def test_direct_formula():
    sp = GradedSpace(dim=2, levels=2, weights=np.array([1.0, 2.0]))
    x = sp.vector([1.0, 1.0])
    assert level_norm(x, 0) == pytest.approx(2.0)
    assert level_norm(x, 1) == pytest.approx(3.0)


def test_level_out_of_range():
    sp = GradedSpace(dim=2, levels=2)
    x = sp.vector([1.0, 1.0])
    with pytest.raises(ValueError):
        level_norm(x, 3)
    with pytest.raises(ValueError):
        level_norm(x, -1)


def test_nesting_monotone_on_random_vectors():
    sp = GradedSpace(dim=5, levels=3)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x = sp.vector(rng.normal(size=5))
        norms = [level_norm(x, m) for m in range(4)]
        assert all(a <= b + 1e-15 for a, b in zip(norms, norms[1:]))


def test_norm_axioms_random_triples():
    sp = GradedSpace(dim=4, levels=3)
    rng = np.random.default_rng(1)
    for _ in range(300):
        a = rng.normal(size=4)
        b = rng.normal(size=4)
        lam = rng.normal()
        for m in range(4):
            na = sp.level_norm(a, m)
            nb = sp.level_norm(b, m)
            assert sp.level_norm(a + b, m) <= na + nb + 1e-12
            assert sp.level_norm(lam * a, m) == pytest.approx(abs(lam) * na)


def test_weights_below_one_rejected():
    with pytest.raises(ValueError):
        GradedSpace(dim=2, levels=2, weights=np.array([1.0, 0.5]))


def test_quadrant_rank_bounds():
    with pytest.raises(ValueError):
        GradedSpace(dim=2, levels=2, quadrant_rank=3)


def test_membership_examples():
    sp = GradedSpace(dim=3, levels=2, quadrant_rank=3)
    m = quadrant_membership(sp.vector([0.0, 0.0, 3.2]))
    assert m.inside
    assert m.active_constraints == frozenset({0, 1})

    sp2 = GradedSpace(dim=2, levels=2, quadrant_rank=1)
    m2 = quadrant_membership(sp2.vector([-1.0, 2.0]))
    assert not m2.inside

    m3 = quadrant_membership(sp2.vector([1e-12, 5.0]), tol=1e-9)
    assert m3.inside
    assert m3.active_constraints == frozenset({0})


def test_membership_scale_covariant():
    sp = GradedSpace(dim=3, levels=2, quadrant_rank=2)
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = sp.vector(rng.normal(size=3))
        lam = rng.uniform(0.1, 10.0)
        a = quadrant_membership(x, tol=0.0)
        b = quadrant_membership(sp.vector(lam * x.coords), tol=0.0)
        assert a.inside == b.inside


def test_declared_level_bookkeeping():
    sp = GradedSpace(dim=2, levels=3)
    x = sp.vector([1.0, 2.0], declared_level=1)
    assert x.declared_level == 1
    assert x.raised().declared_level == 2
    assert sp.vector([0.0, 0.0]).declared_level == 3  # closed-form data is smooth
    top = sp.vector([1.0, 1.0], declared_level=3)
    assert top.raised().declared_level == 3
    with pytest.raises(ValueError):
        sp.vector([1.0, 1.0], declared_level=9)
