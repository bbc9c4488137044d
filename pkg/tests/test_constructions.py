import numpy as np
import pytest

from modprop.algebra import AdmissibleTriple, StructureError
from modprop.bridges import bridge_length, reach_and_length
from modprop.constructions import (Correspondence, FuzzyTorusParams, bridge_join_direct_sum, build_commutative_space,
                                   build_fuzzy_torus, correspondence_bridge, default_torus_lengths,
                                   finite_anchor_reduction, identity_bridge, lift_bound,
                                   lift_bridge_to_free_modules, perturbed_pivot_bridge, q_envelope)
from modprop.hilbert_module import d_norm_free, d_norm_self
from modprop.quantum_metric import FiniteMetricSpace
from modprop.suites import lift_check

TWO = build_commutative_space(FiniteMetricSpace(np.array([[0, 1], [1, 0.0]])))
ONE = build_commutative_space(FiniteMetricSpace(np.zeros((1, 1))))


def test_q_envelope_frozen_values():
    # Leibniz K = 1.2 + 1.2 = 2.4; 2 * 0.1 * (1 + 4 * 2.4 + 2.2) = 2.56
    assert q_envelope(0.1, 1) == pytest.approx(2.56)
    assert q_envelope(0.0, 3) == 0
    for lam in (0.05, 0.5, 2.0):
        assert q_envelope(lam, 1) >= lam
    with pytest.raises(ValueError):
        q_envelope(-1, 1)


def test_lift_bound_dominated_by_envelope():
    for lam in (0.0, 0.1, 1.0, 3.0):
        for n in (1, 2, 3):
            assert lift_bound(lam, n) <= q_envelope(lam, n) + 1e-12
    assert lift_bound(0.0, 2) == 0


def test_default_torus_lengths():
    assert default_torus_lengths(2) == {(0, 1): 2, (1, 0): 2, (1, 1): 4}


def test_lift_of_identity_has_zero_lambda():
    g, info = lift_check(identity_bridge(d_norm_self(TWO)), 1, 1.0)
    assert info["lambda"]["upper"] == 0
    assert info["upper_ok"] and info["lower_ok"]
    assert info["length"]["upper"] <= 2 * 1.0 + 1e-9


def test_lift_of_collapse_within_bound():
    base = correspondence_bridge(d_norm_self(TWO), d_norm_self(ONE), Correspondence.full(2, 1))
    g, info = lift_check(base, 1, 0.5)
    assert info["lower_ok"] and info["upper_ok"]
    assert info["length"]["upper"] <= info["q_envelope"] + 1.0
    assert g.domain.rank == 1 and g.codomain.rank == 1


def test_lift_rejects_mismatched_bundles():
    base = correspondence_bridge(d_norm_self(TWO), d_norm_self(ONE), Correspondence.full(2, 1))
    with pytest.raises(StructureError):
        lift_bridge_to_free_modules(base, 2, 0.5, bundles=(d_norm_free(TWO, 1), d_norm_free(ONE, 1)))


def test_torus_rank_two_lift_coarse():
    torus = build_fuzzy_torus(FuzzyTorusParams(2))
    base = perturbed_pivot_bridge(d_norm_self(torus), np.diag([1.0, -1.0]), 0.1)
    g, info = lift_check(base, 2, 1.5)
    assert info["lower_ok"] and info["upper_ok"]


def test_join_of_identities_is_identity_lattice():
    a = identity_bridge(d_norm_self(TWO))
    j = bridge_join_direct_sum(a, identity_bridge(a.domain))
    assert j.domain.rank == 2 and j.anchors.implicit
    q = reach_and_length(j)
    assert q.modular_reach.upper == 0 and q.basic_reach.upper == 0
    # joint lattice cover at the shared stride is sqrt(2) times the factor cover
    assert q.length.upper <= np.sqrt(2) * 0.05 + 1e-12


def test_join_rejects_different_basics():
    a = identity_bridge(d_norm_self(TWO))
    b = correspondence_bridge(d_norm_self(TWO), d_norm_self(ONE), Correspondence.full(2, 1))
    with pytest.raises(StructureError):
        bridge_join_direct_sum(a, b)


def test_join_subadditive():
    base = correspondence_bridge(d_norm_self(TWO), d_norm_self(ONE), Correspondence.full(2, 1))
    g1 = lift_bridge_to_free_modules(base, 1, 1.0)
    g2 = lift_bridge_to_free_modules(base, 1, 1.0, homogeneous=True)
    j = bridge_join_direct_sum(g1, g2)
    assert bridge_length(j).upper <= bridge_length(g1).upper + bridge_length(g2).upper + 1e-9
    assert reach_and_length(j).height.upper == pytest.approx(reach_and_length(g1).height.upper)


def test_reduction_keeps_fine_families():
    base = correspondence_bridge(d_norm_self(TWO), d_norm_self(ONE), Correspondence.full(2, 1))
    g = lift_bridge_to_free_modules(base, 1, 0.5)
    assert finite_anchor_reduction(g, 1.0) is g


def test_reduction_length_growth():
    bundle = d_norm_self(TWO)
    g = identity_bridge(bundle)
    eps = 0.5
    r = finite_anchor_reduction(g, eps)
    assert not r.anchors.implicit
    assert bridge_length(r).upper <= bridge_length(g).upper + 2 * eps + 1e-9
    with pytest.raises(ValueError):
        finite_anchor_reduction(g, 0)


def test_module_derived_triple_on_free_bundle():
    t = d_norm_free(TWO, 3).triple
    assert t.G.coeffs == {(1, 0, 1): 8.0, (0, 1, 1): 8.0}
    assert t.H.coeffs == {(1, 1): 48.0}
    assert t == AdmissibleTriple.module_derived(1.0, 0.0, 3)
