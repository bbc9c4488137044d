from fractions import Fraction

import numpy as np
import pytest

from modprop.algebra import StructureError
from modprop.bridges import bridge_length, reach_and_length
from modprop.constructions import (Correspondence, build_commutative_space, correspondence_bridge,
                                   lift_bridge_to_free_modules)
from modprop.hilbert_module import ModuleElement, d_norm_self
from modprop.quantum_metric import FiniteMetricSpace
from modprop.treks import (ModularTrek, TrekLength, basic_trek, basic_trek_length, compose_treks, propagate_basic,
                           propagate_itinerary, propinquity_upper, reduce_trek, reverse_trek, trek_length)


def space(d):
    return build_commutative_space(FiniteMetricSpace(np.array(d, float)))


X = d_norm_self(space([[0, 2], [2, 0]]))
Y = d_norm_self(space([[0]]))
Z = d_norm_self(space([[0, 1], [1, 0]]))


@pytest.fixture(scope="module")
def xy():
    return correspondence_bridge(X, Y, Correspondence.full(2, 1), label="xy")


@pytest.fixture(scope="module")
def yz():
    return correspondence_bridge(Y, Z, Correspondence.full(1, 2), label="yz")


@pytest.fixture(scope="module")
def lifted():
    base = correspondence_bridge(Z, Y, Correspondence.full(2, 1))
    return lift_bridge_to_free_modules(base, 1, 0.5)


def test_trek_rejects_gaps(xy):
    with pytest.raises(StructureError):
        ModularTrek([xy, xy])


def test_length_is_exact_sum(xy, yz):
    t = ModularTrek([xy, yz, yz.reversed(), xy.reversed()])
    ln = trek_length(t)
    parts = [bridge_length(g) for g in t.bridges]
    assert ln.exact[1] == sum((Fraction(p.upper) for p in parts), Fraction(0))
    assert ln.lower <= sum(p.lower for p in parts) + 1e-15


def test_compose_is_additive(xy, yz):
    s, t = ModularTrek([xy]), ModularTrek([yz])
    st = compose_treks(s, t)
    assert trek_length(st).exact == (trek_length(s) + trek_length(t)).exact
    with pytest.raises(StructureError):
        compose_treks(t, s)


def test_reverse_keeps_length(xy, yz):
    t = ModularTrek([xy, yz])
    r = reverse_trek(t)
    assert r.domain is Z and r.codomain is X
    assert trek_length(r).exact == trek_length(t).exact
    assert reverse_trek(r).same_as(t)


def test_reduce_drops_loops(xy, yz):
    assert reduce_trek(ModularTrek([xy, xy.reversed()])) is None
    t = ModularTrek([xy, xy.reversed(), xy, yz])
    red = reduce_trek(t)
    assert red.same_as(ModularTrek([xy, yz]))
    assert trek_length(red).upper <= trek_length(t).upper


def test_trek_length_float_rounding_is_outward():
    iv = TrekLength.from_exact(Fraction(1, 3), Fraction(2, 3), Fraction(0))
    assert Fraction(iv.lower) <= Fraction(1, 3) and Fraction(iv.upper) >= Fraction(2, 3)


def test_propinquity_picks_shortest(xy, yz):
    long = ModularTrek([xy, yz, yz.reversed(), yz], "long")
    short = ModularTrek([xy, yz], "short")
    best = propinquity_upper(X, Z, [long, short])
    assert best.label == "short" and best.index == 1
    with pytest.raises(StructureError):
        propinquity_upper(X, Y, [short])


def test_propinquity_triangle(xy, yz):
    a = propinquity_upper(X, Y, [ModularTrek([xy])]).upper
    b = propinquity_upper(Y, Z, [ModularTrek([yz])]).upper
    c = propinquity_upper(X, Z, [compose_treks(ModularTrek([xy]), ModularTrek([yz]))]).upper
    assert c <= a + b + 1e-12


def test_basic_trek_length_bounded_by_modular(xy, yz):
    t = ModularTrek([xy, yz])
    assert basic_trek_length(basic_trek(t)).upper <= trek_length(t).upper + 1e-12


def test_basic_itinerary_certificates(xy, yz):
    t = ModularTrek([xy, yz])
    a = X.base.algebra.from_vec(np.array([0.0, 2.0], complex))
    it = propagate_basic(t, a, 1.0)
    for cert, g in zip(it.certificates, t.bridges):
        assert cert <= reach_and_length(g).length.upper * 1.0 + 1e-7
    assert len(it.waypoints) == 3


def test_modular_itinerary_certificates(lifted):
    t = ModularTrek([lifted, lifted.reversed()])
    omega = ModuleElement(lifted.domain.algebra, lifted.anchors.data[5])
    level = max(lifted.domain.D(omega), 1e-9)
    it = propagate_itinerary(t, omega, level)
    for cert, g in zip(it.certificates, t.bridges):
        assert cert <= level * reach_and_length(g).reach.upper * (1 + 1e-9) + 1e-9
    with pytest.raises(ValueError):
        propagate_itinerary(t, omega * 3.0, level)
