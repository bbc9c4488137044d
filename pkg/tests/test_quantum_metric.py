import numpy as np
import pytest
from scipy.optimize import linprog

from modprop.algebra import AdmissibleTriple, FiniteCStarAlgebra, Polynomial, State, commutative_algebra, op_norm
from modprop.constructions import FuzzyTorusParams, build_commutative_space, build_fuzzy_torus, clock_shift
from modprop.quantum_metric import (FiniteMetricSpace, InvalidSeminorm, ball_net, extend_seminorm, lip_from_metric,
                                    mk_distance, verify_quasi_leibniz)
from modprop.results import NetCapExceeded

PATH = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0.0]])


def coupling_oracle(d, mu, nu):
    n = len(mu)
    a_eq = np.vstack([np.kron(np.eye(n), np.ones(n)), np.kron(np.ones(n), np.eye(n))])
    return linprog(np.ravel(d), A_eq=a_eq, b_eq=np.r_[mu, nu], bounds=(0, None), method="highs").fun


def test_metric_validation():
    with pytest.raises(ValueError):
        FiniteMetricSpace(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0.0]]))
    with pytest.raises(ValueError):
        FiniteMetricSpace(np.array([[0, 0], [0, 0.0]]))


def test_path_lipschitz_constant():
    space = build_commutative_space(FiniteMetricSpace(PATH))
    assert space.L(space.algebra.from_vec(np.array([0, 1, 3.0]))) == pytest.approx(2.0)


def test_diameter_bounds():
    assert build_commutative_space(FiniteMetricSpace(np.zeros((1, 1)))).diameter_bound == 0
    two = build_commutative_space(FiniteMetricSpace(np.array([[0, 1], [1, 0.0]])))
    assert two.diameter_bound == pytest.approx(1.0)
    assert build_commutative_space(FiniteMetricSpace(PATH)).diameter_bound == pytest.approx(2.0)


def test_constants_have_zero_lipschitz():
    space = build_commutative_space(FiniteMetricSpace(PATH))
    assert space.L(space.algebra.scalar(3.0)) == 0


def test_fuzzy_torus_clock_shift():
    u, v = clock_shift(2, 1)
    assert np.allclose(u @ v, -v @ u)
    torus = build_fuzzy_torus(FuzzyTorusParams(2, 1, {(0, 1): 2, (1, 0): 2, (1, 1): 4}))
    alg = torus.algebra
    V, U = alg.element([v]), alg.element([u])
    assert torus.L(V + V.adj) == pytest.approx(2.0)
    assert torus.L(U + U.adj) == pytest.approx(2.0)
    assert torus.L(alg.unit()) == pytest.approx(0.0, abs=1e-12)


def test_fuzzy_torus_length_validation():
    with pytest.raises(ValueError):
        FuzzyTorusParams(3, 1, {(0, 1): 1.0, (0, 2): 2.0, (1, 0): 1, (2, 0): 1, (1, 1): 1, (2, 2): 1, (1, 2): 1,
                                (2, 1): 1})
    with pytest.raises(ValueError):
        FuzzyTorusParams(1)


def test_extension_restricts_to_lipschitz():
    rng = np.random.default_rng(1)
    space = build_fuzzy_torus(FuzzyTorusParams(3))
    M = extend_seminorm(space.lip)
    for _ in range(10):
        a = space.algebra.random_self_adjoint(rng)
        assert M(a) == pytest.approx(space.L(a), rel=1e-9)


def test_extension_product_bound():
    rng = np.random.default_rng(2)
    space = build_fuzzy_torus(FuzzyTorusParams(2))
    M = extend_seminorm(space.lip)
    for _ in range(20):
        a, b = space.algebra.random_element(rng), space.algebra.random_element(rng)
        assert M(a * b) <= 8 * space.triple.F(op_norm(a), op_norm(b), M(a), M(b)) + 1e-9


def test_mk_dirac_two_points():
    space = build_commutative_space(FiniteMetricSpace(np.array([[0, 3.5], [3.5, 0]])))
    iv = mk_distance(space, State.point_mass(space.algebra, 0), State.point_mass(space.algebra, 1))
    assert iv.contains(3.5, 1e-9) and iv.width < 1e-8


def test_mk_path_frozen_value():
    space = build_commutative_space(FiniteMetricSpace(PATH))
    iv = mk_distance(space, State.from_weights(space.algebra, [1, 0, 0]),
                     State.from_weights(space.algebra, [0, 0.5, 0.5]))
    assert iv.contains(1.5, 1e-9)


def test_mk_matches_coupling_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        metric = FiniteMetricSpace.random(rng, int(rng.integers(2, 7)))
        space = lip_from_metric(metric)
        mu, nu = rng.dirichlet(np.ones(metric.size)), rng.dirichlet(np.ones(metric.size))
        iv = mk_distance(space, State.from_weights(space.algebra, mu), State.from_weights(space.algebra, nu))
        ref = coupling_oracle(metric.distances, mu, nu)
        assert abs(iv.lower - ref) < 1e-6 and abs(iv.upper - ref) < 1e-6


def test_mk_noncommutative_bracket_symmetric():
    rng = np.random.default_rng(5)
    space = build_fuzzy_torus(FuzzyTorusParams(2))
    phi, psi = space.algebra.random_state(rng), space.algebra.random_state(rng)
    a, b = mk_distance(space, phi, psi), mk_distance(space, psi, phi)
    assert a.lower <= a.upper <= space.diameter_bound + 1e-6
    assert abs(a.mid - b.mid) < 1e-5


def test_ball_net_two_points():
    space = build_commutative_space(FiniteMetricSpace(np.array([[0, 1], [1, 0.0]])))
    net = ball_net(space, 1.0, 0.5)
    diffs = np.round((net.points[:, 1] - net.points[:, 0]).real, 9)
    assert set(diffs) <= {-1.0, -0.5, 0.0, 0.5, 1.0}
    assert {-1.0, 1.0} <= set(diffs)


def test_ball_net_cap():
    space = build_commutative_space(FiniteMetricSpace(PATH))
    with pytest.raises(NetCapExceeded):
        ball_net(space, 1.0, 1e-3, cap=10)


def test_quasi_leibniz_passes_and_halved_fails():
    space = build_fuzzy_torus(FuzzyTorusParams(2))
    assert verify_quasi_leibniz(space, 100).passed
    halved = AdmissibleTriple(1.0, 0.0, Polynomial(3, {(1, 0, 1): 1.0, (0, 1, 1): 1.0}), Polynomial(2, {(1, 1): 2.0}))
    r = verify_quasi_leibniz(space, 200, F=lambda *x: 0.5 * halved.F(*x))
    assert not r.passed and r.witness is not None


def test_quasi_leibniz_commutative():
    space = build_commutative_space(FiniteMetricSpace.random(np.random.default_rng(3), 4))
    assert verify_quasi_leibniz(space, 100).passed


def test_invalid_seminorm_reported():
    from modprop.quantum_metric import lip_from_group_action
    alg = FiniteCStarAlgebra((2,))
    with pytest.raises(InvalidSeminorm):
        lip_from_group_action(alg, [[np.eye(2, dtype=complex)]], [1.0])


def test_one_point_space():
    space = build_commutative_space(FiniteMetricSpace(np.zeros((1, 1))))
    assert space.L(commutative_algebra(1).scalar(2.0)) == 0
