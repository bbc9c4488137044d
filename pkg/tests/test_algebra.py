import numpy as np
import pytest

from modprop.algebra import (AdmissibleTriple, FiniteCStarAlgebra, InvalidPivot, Polynomial, State, StructureError,
                             batch_op_norm, involution_parts, jordan_lie, matrix_algebra, one_level_set, op_norm,
                             state_eval)

M2 = matrix_algebra(2)
PX = np.array([[0, 1], [1, 0]], complex)
PY = np.array([[0, -1j], [1j, 0]])
PZ = np.array([[1, 0], [0, -1]], complex)


def test_op_norm_matches_svd():
    rng = np.random.default_rng(0)
    alg = FiniteCStarAlgebra((1, 3, 2))
    for _ in range(20):
        a = alg.random_element(rng)
        ref = max(np.linalg.svd(b, compute_uv=False).max() for b in a.blocks)
        assert op_norm(a) == pytest.approx(ref, rel=1e-12)
    vecs = np.stack([alg.random_element(rng).vec for _ in range(5)])
    ref = [op_norm(alg.from_vec(v)) for v in vecs]
    assert np.allclose(batch_op_norm(alg, vecs), ref)


def test_involution_parts_of_nilpotent():
    a = M2.element([np.array([[0, 1], [0, 0]], complex)])
    adj, re, im = involution_parts(a)
    assert np.allclose(adj.blocks[0], [[0, 0], [1, 0]])
    assert np.allclose(re.blocks[0], 0.5 * np.array([[0, 1], [1, 0]]))
    assert np.allclose(im.blocks[0], np.array([[0, 1], [-1, 0]]) / 2j)
    assert (re + im * 1j).allclose(a)


def test_sqrt2_norm_bound_fails_for_nilpotent():
    # ||e12|| = 1 while Re and Im both have norm 1/2: the sqrt2 bound gives 0.707
    a = M2.element([np.array([[0, 1], [0, 0]], complex)])
    _, re, im = involution_parts(a)
    assert op_norm(a) == pytest.approx(1.0)
    assert np.sqrt(2) * max(op_norm(re), op_norm(im)) == pytest.approx(np.sqrt(2) / 2)
    assert op_norm(a) <= op_norm(re) + op_norm(im) + 1e-12


def test_jordan_lie_of_paulis():
    jor, lie = jordan_lie(M2.element([PX]), M2.element([PY]))
    assert np.allclose(jor.blocks[0], 0)
    assert np.allclose(lie.blocks[0], PZ)


def test_state_eval_matches_double_loop():
    rng = np.random.default_rng(3)
    alg = FiniteCStarAlgebra((2, 3))
    phi = alg.random_state(rng)
    a = alg.random_element(rng)
    ref = 0j
    for rho, blk in zip(phi.densities, a.blocks):
        for i in range(blk.shape[0]):
            for j in range(blk.shape[0]):
                ref += rho[i, j] * blk[j, i]
    assert state_eval(phi, a) == pytest.approx(ref, abs=1e-12)
    assert np.sum(phi.vec * a.vec) == pytest.approx(ref, abs=1e-12)


def test_level_set_of_projection():
    rep = one_level_set(M2, M2.element([np.diag([1.0, 0.0]).astype(complex)]))
    assert rep.nonempty and rep.dimension == 1
    v = rep.bases[0][:, 0]
    assert abs(abs(v[0]) - 1) < 1e-12
    assert state_eval(rep.witness, M2.element([np.diag([1.0, 0.0]).astype(complex)])) == pytest.approx(1)


def test_level_set_rejects_long_pivot():
    with pytest.raises(InvalidPivot):
        one_level_set(M2, M2.scalar(2.0))


def test_level_set_empty_for_contraction():
    assert not one_level_set(M2, M2.scalar(0.5)).nonempty


def test_state_validation():
    with pytest.raises(ValueError):
        State.from_weights(FiniteCStarAlgebra((1, 1)), [0.7, 0.7])
    with pytest.raises(ValueError):
        State(M2, [np.diag([1.5, -0.5])])


def test_mixed_algebras_rejected():
    with pytest.raises(StructureError):
        M2.unit() + matrix_algebra(3).unit()


def test_polynomial_roundtrip():
    p = Polynomial(2, {(1, 1): 3.0, (2, 0): 0.5})
    assert p(2.0, 3.0) == pytest.approx(3 * 6 + 0.5 * 4)
    assert Polynomial.from_json(2, p.to_json()) == p
    with pytest.raises(ValueError):
        Polynomial(2, {(1, 1): -1.0})


def test_admissible_triples_pass_checks():
    assert AdmissibleTriple.leibniz().check() == []
    assert AdmissibleTriple.module_derived(1.5, 0.5, 3).check() == []


def test_module_derived_coefficients():
    t = AdmissibleTriple.module_derived(2.0, 1.0, rank=3)
    assert t.G.coeffs == {(1, 0, 1): 16.0, (0, 1, 1): 24.0}
    assert t.H.coeffs == {(1, 1): 8 * 3 * 5.0}


def test_weak_H_fails_check():
    t = AdmissibleTriple.leibniz().with_H(Polynomial(2, {(1, 1): 1.0}))
    assert any("H" in f for f in t.check())


def test_triple_json_roundtrip():
    t = AdmissibleTriple.module_derived(1.0, 0.25, 2)
    assert AdmissibleTriple.from_json(t.to_json()) == t
