import numpy as np
import pytest

from modprop.algebra import InvalidPivot, StructureError, op_norm
from modprop.bridges import (AnchorFamily, BasicBridge, Embedding, ModularBridge, basic_reach, bridge_length,
                             bridge_seminorm, deck_seminorm, find_modular_target, find_target, generic_commutative_height,
                             height, imprint, modular_reach, reach_and_length, reverse_bridge)
from modprop.constructions import (Correspondence, FuzzyTorusParams, build_commutative_space, build_fuzzy_torus,
                                   correspondence_bridge, identity_bridge, lift_bridge_to_free_modules,
                                   perturbed_pivot_bridge)
from modprop.hilbert_module import ModuleElement, d_norm_free, d_norm_self
from modprop.quantum_metric import FiniteMetricSpace
from modprop.results import CertificateFailure

TWO_D2 = build_commutative_space(FiniteMetricSpace(np.array([[0, 2], [2, 0.0]])))
TWO_D1 = build_commutative_space(FiniteMetricSpace(np.array([[0, 1], [1, 0.0]])))
ONE = build_commutative_space(FiniteMetricSpace(np.zeros((1, 1))))
TORUS = build_fuzzy_torus(FuzzyTorusParams(2))


def fn(space, values):
    return space.algebra.from_vec(np.asarray(values, complex))


@pytest.fixture(scope="module")
def collapse():
    return correspondence_bridge(d_norm_self(TWO_D2), d_norm_self(ONE), Correspondence.full(2, 1))


def test_bridge_seminorm_diagonal_relation():
    g = correspondence_bridge(d_norm_self(TWO_D1), d_norm_self(TWO_D1), Correspondence.diagonal(2))
    assert bridge_seminorm(g, fn(TWO_D1, [0, 1]), fn(TWO_D1, [0, 0])) == pytest.approx(1.0)
    assert bridge_seminorm(g, fn(TWO_D1, [0, 1]), fn(TWO_D1, [0, 1])) == 0


def test_bridge_seminorm_is_max_over_relation():
    rng = np.random.default_rng(0)
    three = build_commutative_space(FiniteMetricSpace.random(rng, 3))
    rel = np.array([[1, 0], [1, 1], [0, 1]], bool)
    g = correspondence_bridge(d_norm_self(three), d_norm_self(TWO_D1), Correspondence(rel))
    for _ in range(10):
        f, h = rng.normal(size=3), rng.normal(size=2)
        ref = max(abs(f[x] - h[y]) for x in range(3) for y in range(2) if rel[x, y])
        assert bridge_seminorm(g, fn(three, f), fn(TWO_D1, h)) == pytest.approx(ref)


def test_reverse_swaps_seminorms(collapse):
    rv = reverse_bridge(collapse)
    a, b = fn(TWO_D2, [0.3, -1.2]), fn(ONE, [0.4])
    assert rv.bn(b, a) == pytest.approx(collapse.bn(a, b))
    w = collapse.domain.element(np.array([[0.1, 0.5j]]))
    v = collapse.codomain.element(np.array([[0.2]]))
    assert deck_seminorm(rv, v, w) == pytest.approx(deck_seminorm(collapse, w, v))
    assert rv.reversed() is collapse


def test_deck_with_unit_anchor():
    bundle = d_norm_self(TWO_D1)
    unit = AnchorFamily.explicit(bundle, [np.array([[1.0, 1.0]])])
    basic = correspondence_bridge(bundle, bundle, Correspondence.from_pairs(2, 2, [(0, 0), (1, 0), (1, 1)])).basic
    g = ModularBridge(bundle, bundle, basic, unit, unit)
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.normal(size=2) + 1j * rng.normal(size=2)
        b = rng.normal(size=2) + 1j * rng.normal(size=2)
        A, B = fn(TWO_D1, a), fn(TWO_D1, b)
        ref = max(g.bn(A, B), g.bn(A.adj, B.adj))
        assert deck_seminorm(g, bundle.element(a[None]), bundle.element(b[None])) == pytest.approx(ref)


def test_basic_reach_examples(collapse):
    assert basic_reach(collapse).contains(1.0, 1e-9)
    single = correspondence_bridge(d_norm_self(TWO_D2), d_norm_self(TWO_D2), Correspondence.from_pairs(2, 2, [(0, 0)]))
    assert basic_reach(single).upper <= 1e-9


def test_height_examples(collapse):
    assert height(collapse).upper == 0
    single = correspondence_bridge(d_norm_self(TWO_D2), d_norm_self(TWO_D2), Correspondence.from_pairs(2, 2, [(0, 0)]))
    assert height(single).contains(2.0, 1e-9)
    assert bridge_length(single).contains(2.0, 1e-9)
    assert generic_commutative_height(single.basic) == pytest.approx(2.0, abs=1e-6)


def test_modular_reach_at_most_two(collapse):
    assert modular_reach(collapse).upper <= 2 + 1e-9
    g = perturbed_pivot_bridge(d_norm_self(TORUS), np.diag([1.0, -1.0]), 0.3)
    assert modular_reach(g).upper <= 2 + 1e-9


def test_imprint_of_zero_anchor(collapse):
    iv = imprint(collapse)
    assert iv.contains(1.0, 1e-9)


def test_correspondence_length_brackets_one(collapse):
    assert bridge_length(collapse).contains(1.0, 1e-9)
    assert bridge_length(collapse.reversed()) == bridge_length(collapse)


@pytest.mark.parametrize("bundle", [d_norm_self(TWO_D1), d_norm_free(TWO_D1, 2), d_norm_self(TORUS)],
                         ids=["self", "free", "torus"])
def test_identity_bridge_length(bundle):
    g = identity_bridge(bundle)
    q = reach_and_length(g)
    assert q.basic_reach.upper == 0 and q.modular_reach.upper == 0
    assert q.length.lower <= 0 <= q.length.upper <= 0.05
    a = bundle.base.algebra.random_self_adjoint(np.random.default_rng(0))
    assert g.bn(a, a) == 0


def test_find_target_constant_midpoint(collapse):
    b = find_target(collapse, fn(TWO_D2, [0, 2]), 1.0)
    assert np.allclose(b.vec, [1.0], atol=1e-7)


def test_find_target_norm_bound():
    rng = np.random.default_rng(4)
    g = perturbed_pivot_bridge(d_norm_self(TORUS), np.diag([1.0, -1.0]), 0.1)
    lam = bridge_length(g).upper
    for _ in range(5):
        a = TORUS.algebra.random_self_adjoint(rng)
        level = TORUS.L(a)
        b = find_target(g, a, level)
        assert TORUS.L(b) <= level * (1 + 1e-6) + 1e-8
        assert op_norm(b) <= op_norm(a) + 2 * level * lam + 1e-8


def test_find_target_rejects_low_level(collapse):
    with pytest.raises(ValueError):
        find_target(collapse, fn(TWO_D2, [0, 2]), 0.5)


def test_modular_target_pairs_anchor():
    base = correspondence_bridge(d_norm_self(TWO_D1), d_norm_self(ONE), Correspondence.full(2, 1))
    g = lift_bridge_to_free_modules(base, 1, 0.5)
    j = 7
    w = ModuleElement(g.domain.algebra, g.anchors.data[j])
    eta = find_modular_target(g, w, 1.0)
    assert np.allclose(eta.data, g.coanchors.data[j])


def test_pivot_validation():
    alg = TWO_D1.algebra
    emb = Embedding.identity(alg)
    with pytest.raises(InvalidPivot):
        BasicBridge(TWO_D1, TWO_D1, alg, alg.scalar(0.5), emb, emb)
    with pytest.raises(InvalidPivot):
        BasicBridge(TWO_D1, TWO_D1, alg, fn(TWO_D1, [1j, -1]), emb, emb)


def test_embedding_validation():
    with pytest.raises(StructureError):
        Embedding(TWO_D1.algebra, TWO_D1.algebra, np.array([[1, 0], [0, 0.5]]))
    with pytest.raises(StructureError):
        Embedding(TWO_D1.algebra, ONE.algebra, np.array([[1, 1.0]]))


def test_anchor_outside_ball_rejected():
    bundle = d_norm_self(TWO_D1)
    fam = AnchorFamily.explicit(bundle, [np.array([[0.0, 3.0]])])
    basic = identity_bridge(bundle).basic
    with pytest.raises(StructureError):
        ModularBridge(bundle, bundle, basic, fam, fam)


def test_certificate_failure_on_bad_level(collapse):
    with pytest.raises((CertificateFailure, ValueError)):
        find_modular_target(collapse, collapse.domain.element(np.array([[0.0, 2.0]])), 0.5)
