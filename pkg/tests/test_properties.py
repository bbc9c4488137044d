from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modprop.algebra import FiniteCStarAlgebra, Polynomial, State, involution_parts, op_norm
from modprop.bridges import bridge_seminorm, deck_seminorm
from modprop.constructions import Correspondence, build_commutative_space, correspondence_bridge, q_envelope
from modprop.hilbert_module import (ModuleElement, d_ball_lattice, d_norm_free, d_norm_self, hilbert_norm,
                                    inner_product)
from modprop.quantum_metric import FiniteMetricSpace, mk_distance
from modprop.treks import TrekLength

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
dims = st.lists(st.integers(1, 3), min_size=1, max_size=3).map(tuple)


def complex_matrix(draw, d):
    re = draw(arrays(float, (d, d), elements=finite))
    im = draw(arrays(float, (d, d), elements=finite))
    return re + 1j * im


@st.composite
def elements(draw):
    alg = FiniteCStarAlgebra(draw(dims))
    return alg.element([complex_matrix(draw, d) for d in alg.block_dims])


@st.composite
def metric_spaces(draw, min_size=2, max_size=5):
    n = draw(st.integers(min_size, max_size))
    pts = draw(arrays(float, (n, 2), elements=st.floats(-5, 5, allow_nan=False), unique=False))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d = d + 0.5 * (1 - np.eye(n))  # keep points apart, metric stays valid
    return build_commutative_space(FiniteMetricSpace(d))


@FAST
@given(elements())
def test_norm_triangle_bound(a):
    _, re, im = involution_parts(a)
    assert op_norm(a) <= op_norm(re) + op_norm(im) + 1e-9
    assert max(op_norm(re), op_norm(im)) <= op_norm(a) + 1e-9


@FAST
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_norm_sqrt2_bound_on_normal_elements(d, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    eig = rng.normal(size=d) + 1j * rng.normal(size=d)
    a = FiniteCStarAlgebra((d,)).element([q @ np.diag(eig) @ q.conj().T])
    _, re, im = involution_parts(a)
    assert op_norm(a) <= np.sqrt(2) * max(op_norm(re), op_norm(im)) + 1e-9


@FAST
@given(elements())
def test_adjoint_is_isometric_and_involutive(a):
    assert abs(op_norm(a.adj) - op_norm(a)) <= 1e-9 * (1 + op_norm(a))
    assert a.adj.adj.allclose(a)


@FAST
@given(metric_spaces(), st.data())
def test_mk_symmetric_and_triangle(space, data):
    n = space.algebra.dim
    w = [data.draw(arrays(float, n, elements=st.floats(0.01, 1))) for _ in range(3)]
    mu, nu, rho = (State.from_weights(space.algebra, v / v.sum()) for v in w)
    ab, ba = mk_distance(space, mu, nu), mk_distance(space, nu, mu)
    bc, ac = mk_distance(space, nu, rho), mk_distance(space, mu, rho)
    assert abs(ab.mid - ba.mid) <= 1e-6
    assert ac.lower <= ab.upper + bc.upper + 1e-6
    assert ab.upper <= space.diameter_bound + 1e-6


@FAST
@given(metric_spaces(max_size=4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_d_norm_dominates_hilbert_norm(space, rank, seed):
    rng = np.random.default_rng(seed)
    bundle = d_norm_free(space, rank)
    w = ModuleElement(space.algebra, rng.normal(size=(rank, space.algebra.dim))
                      + 1j * rng.normal(size=(rank, space.algebra.dim)))
    assert hilbert_norm(w) <= bundle.D(w) + 1e-9
    assert inner_product(w, w).allclose(inner_product(w, w).adj)


@FAST
@given(metric_spaces(max_size=4), st.integers(1, 3), st.floats(1e-3, 3.0), st.booleans())
def test_lattice_cover_never_exceeds_resolution(space, rank, resolution, aligned):
    lat = d_ball_lattice(d_norm_free(space, rank), 1.0, resolution, aligned)
    assert lat.covering_radius <= resolution


@FAST
@given(metric_spaces(max_size=3), metric_spaces(max_size=3), st.integers(0, 2**32 - 1))
def test_reverse_bridge_swaps_seminorms(x, y, seed):
    rng = np.random.default_rng(seed)
    rel = rng.random((x.algebra.dim, y.algebra.dim)) < 0.6
    rel[np.arange(x.algebra.dim), rng.integers(0, y.algebra.dim, x.algebra.dim)] = True
    rel[rng.integers(0, x.algebra.dim, y.algebra.dim), np.arange(y.algebra.dim)] = True
    g = correspondence_bridge(d_norm_self(x), d_norm_self(y), Correspondence(rel))
    a = x.algebra.random_self_adjoint(rng)
    b = y.algebra.random_self_adjoint(rng)
    assert abs(bridge_seminorm(g, a, b) - bridge_seminorm(g.reversed(), b, a)) <= 1e-12
    assert bridge_seminorm(g, a, b) >= 0
    w = g.domain.element(rng.normal(size=(1, x.algebra.dim)))
    v = g.codomain.element(rng.normal(size=(1, y.algebra.dim)))
    assert abs(deck_seminorm(g, w, v) - deck_seminorm(g.reversed(), v, w)) <= 1e-9


@FAST
@given(st.lists(st.fractions(0, 10, max_denominator=1000), min_size=2, max_size=6))
def test_trek_length_sum_is_exact(values):
    total = sum((TrekLength.from_exact(v, v, Fraction(0)) for v in values),
                TrekLength.from_exact(Fraction(0), Fraction(0), Fraction(0)))
    assert total.exact[0] == total.exact[1] == sum(values)
    assert Fraction(total.lower) <= sum(values) <= Fraction(total.upper)


@FAST
@given(st.floats(0, 5), st.floats(0, 5), st.integers(1, 4))
def test_q_envelope_monotone(l1, l2, n):
    lo, hi = sorted((l1, l2))
    assert q_envelope(lo, n) <= q_envelope(hi, n) + 1e-12
    assert q_envelope(hi, n) >= hi - 1e-12


@FAST
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
def test_polynomial_monotone(x, y, dx, dy):
    p = Polynomial(2, {(1, 1): 2.0, (2, 0): 0.5, (0, 1): 1.0})
    assert p(x, y) <= p(x + dx, y + dy) + 1e-9
