"""Finite-dimensional C*-algebras as direct sums of full matrix algebras."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

KERNEL_CUTOFF = 1e-9
PIVOT_TOL = 1e-9


class StructureError(ValueError):
    """Shape or algebra mismatch between operands."""


class InvalidPivot(ValueError):
    pass


@dataclass(frozen=True)
class FiniteCStarAlgebra:
    block_dims: tuple
    label: str = ""

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims or any(d < 1 for d in dims):
            raise StructureError(f"block_dims must be nonempty positive integers, got {self.block_dims}")
        object.__setattr__(self, "block_dims", dims)

    @property
    def dim(self):
        """Complex dimension, i.e. length of the flattened coordinate vector."""
        return sum(d * d for d in self.block_dims)

    @property
    def offsets(self):
        out, k = [], 0
        for d in self.block_dims:
            out.append(k)
            k += d * d
        return out

    @property
    def is_commutative(self):
        return all(d == 1 for d in self.block_dims)

    def same_as(self, other):
        return self.block_dims == other.block_dims

    def split(self, vecs):
        """Flattened coordinates (..., dim) -> list of (..., d, d) block arrays."""
        vecs = np.asarray(vecs)
        lead = vecs.shape[:-1]
        return [vecs[..., o:o + d * d].reshape(lead + (d, d))
                for o, d in zip(self.offsets, self.block_dims)]

    def join(self, blocks):
        lead = np.asarray(blocks[0]).shape[:-2]
        return np.concatenate([np.asarray(b).reshape(lead + (-1,)) for b in blocks], axis=-1)

    def element(self, blocks):
        return AlgebraElement(self, blocks)

    def from_vec(self, vec):
        return AlgebraElement(self, self.split(np.asarray(vec, dtype=complex)))

    def zero(self):
        return AlgebraElement(self, [np.zeros((d, d), complex) for d in self.block_dims])

    def unit(self):
        return AlgebraElement(self, [np.eye(d, dtype=complex) for d in self.block_dims])

    def scalar(self, c):
        return self.unit() * c

    def unit_vec(self):
        return self.unit().vec

    def matrix_units(self):
        """Basis of matrix units E_{ij} in every block, as flattened vectors."""
        return list(np.eye(self.dim, dtype=complex))

    def hermitian_basis(self):
        """Real basis of the self-adjoint part, orthonormal for the Hilbert-Schmidt pairing."""
        basis = []
        for o, d in zip(self.offsets, self.block_dims):
            for i in range(d):
                for j in range(i, d):
                    if i == j:
                        m = np.zeros((d, d), complex)
                        m[i, i] = 1.0
                        basis.append(self._embed(o, d, m))
                    else:
                        m = np.zeros((d, d), complex)
                        m[i, j] = m[j, i] = 1 / np.sqrt(2)
                        basis.append(self._embed(o, d, m))
                        m = np.zeros((d, d), complex)
                        m[i, j] = -1j / np.sqrt(2)
                        m[j, i] = 1j / np.sqrt(2)
                        basis.append(self._embed(o, d, m))
        return np.array(basis)

    def _embed(self, offset, d, m):
        v = np.zeros(self.dim, complex)
        v[offset:offset + d * d] = m.reshape(-1)
        return v

    def random_element(self, rng, scale=1.0):
        v = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        return self.from_vec(scale * v)

    def random_self_adjoint(self, rng, scale=1.0):
        return self.random_element(rng, scale).re

    def random_state(self, rng, pure=False):
        dens = []
        weights = rng.dirichlet(np.ones(len(self.block_dims)))
        if pure:
            weights = np.zeros(len(self.block_dims))
            weights[rng.integers(len(self.block_dims))] = 1.0
        for w, d in zip(weights, self.block_dims):
            if pure:
                v = rng.normal(size=d) + 1j * rng.normal(size=d)
                v /= np.linalg.norm(v)
                rho = np.outer(v, v.conj())
            else:
                g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
                rho = g @ g.conj().T
                rho /= np.trace(rho).real
            dens.append(w * rho)
        return State(self, dens)

    def tracial_state(self):
        n = sum(self.block_dims)
        return State(self, [np.eye(d) / n for d in self.block_dims])

    def to_json(self):
        return {"block_dims": list(self.block_dims), "label": self.label}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["block_dims"]), obj.get("label", ""))


def commutative_algebra(n, label=""):
    return FiniteCStarAlgebra((1,) * n, label)


def matrix_algebra(q, label=""):
    return FiniteCStarAlgebra((q,), label)


class AlgebraElement:
    __slots__ = ("algebra", "blocks", "_vec")

    def __init__(self, algebra, blocks):
        blocks = [np.array(b, dtype=complex) for b in blocks]
        if len(blocks) != len(algebra.block_dims):
            raise StructureError(f"expected {len(algebra.block_dims)} blocks, got {len(blocks)}")
        for b, d in zip(blocks, algebra.block_dims):
            if b.shape != (d, d):
                raise StructureError(f"block of shape {b.shape} where {(d, d)} expected")
            b.setflags(write=False)
        self.algebra = algebra
        self.blocks = tuple(blocks)
        self._vec = None

    @property
    def vec(self):
        if self._vec is None:
            v = self.algebra.join(self.blocks)
            v.setflags(write=False)
            self._vec = v
        return self._vec

    def _check(self, other):
        if not isinstance(other, AlgebraElement) or not self.algebra.same_as(other.algebra):
            raise StructureError("operands live in different algebras")

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return AlgebraElement(self.algebra, [-a for a in self.blocks])

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            self._check(other)
            return AlgebraElement(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])
        return AlgebraElement(self.algebra, [a * other for a in self.blocks])

    def __rmul__(self, c):
        return AlgebraElement(self.algebra, [c * a for a in self.blocks])

    def __truediv__(self, c):
        return AlgebraElement(self.algebra, [a / c for a in self.blocks])

    @property
    def adj(self):
        return AlgebraElement(self.algebra, [a.conj().T for a in self.blocks])

    @property
    def re(self):
        return AlgebraElement(self.algebra, [(a + a.conj().T) / 2 for a in self.blocks])

    @property
    def im(self):
        return AlgebraElement(self.algebra, [(a - a.conj().T) / 2j for a in self.blocks])

    def norm(self):
        return op_norm(self)

    def is_self_adjoint(self, tol=1e-12):
        return all(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol for a in self.blocks)

    def allclose(self, other, atol=1e-10):
        self._check(other)
        return all(np.allclose(a, b, atol=atol, rtol=0) for a, b in zip(self.blocks, other.blocks))

    def __repr__(self):
        return f"AlgebraElement({self.algebra.block_dims}, {[b.tolist() for b in self.blocks]})"


def _check_element(a):
    if not isinstance(a, AlgebraElement):
        raise StructureError("expected an AlgebraElement")
    for b, d in zip(a.blocks, a.algebra.block_dims):
        if b.shape != (d, d):
            raise StructureError("element does not match its algebra")


def op_norm(a):
    _check_element(a)
    return max(float(np.linalg.norm(b, 2)) if b.shape[0] > 1 else float(abs(b[0, 0])) for b in a.blocks)


def batch_op_norm(algebra, vecs):
    """Operator norms of a stack of flattened elements, shape (...,) from (..., dim)."""
    vecs = np.asarray(vecs)
    if algebra.is_commutative:
        return np.max(np.abs(vecs), axis=-1) if vecs.shape[-1] else np.zeros(vecs.shape[:-1])
    out = None
    for b, d in zip(algebra.split(vecs), algebra.block_dims):
        n = np.abs(b[..., 0, 0]) if d == 1 else np.linalg.norm(b, ord=2, axis=(-2, -1))
        out = n if out is None else np.maximum(out, n)
    return out


def batch_product(algebra, u, v):
    """Blockwise products of flattened elements with broadcasting over leading axes."""
    if algebra.is_commutative:
        return np.asarray(u) * np.asarray(v)
    return algebra.join([x @ y for x, y in zip(algebra.split(u), algebra.split(v))])


def batch_adjoint(algebra, u):
    if algebra.is_commutative:
        return np.conj(u)
    return algebra.join([np.conj(np.swapaxes(x, -1, -2)) for x in algebra.split(u)])


def involution_parts(a):
    _check_element(a)
    return a.adj, a.re, a.im


def jordan_lie(a, b):
    a._check(b)
    ab, ba = a * b, b * a
    return (ab + ba) / 2, (ab - ba) / 2j


@dataclass(frozen=True)
class State:
    algebra: FiniteCStarAlgebra
    densities: tuple = field(default=())

    def __post_init__(self):
        dens = tuple(np.array(r, dtype=complex) for r in self.densities)
        if len(dens) != len(self.algebra.block_dims):
            raise StructureError("one density per block required")
        total = 0.0
        for r, d in zip(dens, self.algebra.block_dims):
            if r.shape != (d, d):
                raise StructureError("density shape mismatch")
            if np.max(np.abs(r - r.conj().T), initial=0.0) > 1e-10:
                raise ValueError("density is not Hermitian")
            if np.linalg.eigvalsh((r + r.conj().T) / 2).min(initial=0.0) < -1e-10:
                raise ValueError("density is not positive semidefinite")
            total += np.trace(r).real
            r.setflags(write=False)
        if abs(total - 1.0) > 1e-12 * max(1, len(dens)) + 1e-12:
            raise ValueError(f"state has total trace {total}, expected 1")
        object.__setattr__(self, "densities", dens)

    @property
    def vec(self):
        """Flattened pairing vector p with state(a) = sum(p * a.vec)."""
        return self.algebra.join([r.T for r in self.densities])

    @classmethod
    def point_mass(cls, algebra, k):
        if not algebra.is_commutative:
            raise StructureError("point masses only exist on commutative algebras")
        w = np.zeros(len(algebra.block_dims))
        w[k] = 1.0
        return cls.from_weights(algebra, w)

    @classmethod
    def from_weights(cls, algebra, weights):
        w = np.asarray(weights, float)
        return cls(algebra, [np.array([[x]]) for x in w])

    @classmethod
    def vector_state(cls, algebra, block, v):
        v = np.asarray(v, complex)
        v = v / np.linalg.norm(v)
        dens = [np.zeros((d, d), complex) for d in algebra.block_dims]
        dens[block] = np.outer(v, v.conj())
        return cls(algebra, dens)


def state_eval(phi, a):
    if not phi.algebra.same_as(a.algebra):
        raise StructureError("state and element on different algebras")
    return complex(sum(np.trace(r @ b) for r, b in zip(phi.densities, a.blocks)))


@dataclass(frozen=True)
class LevelSetReport:
    nonempty: bool
    bases: tuple  # per block, columns spanning ker(1-x) ∩ ker(1-x*)
    witness: State | None

    @property
    def dimension(self):
        return sum(b.shape[1] for b in self.bases)


def one_level_set(algebra, x, cutoff=KERNEL_CUTOFF, strict=False):
    """States on which the pivot acts as the unit, via a per-block joint kernel."""
    if not algebra.same_as(x.algebra):
        raise StructureError("pivot not in the ambient algebra")
    nx = op_norm(x)
    if nx > 1 + PIVOT_TOL:
        raise InvalidPivot(f"pivot norm {nx} exceeds 1")
    if strict and abs(nx - 1) > PIVOT_TOL:
        raise InvalidPivot(f"pivot norm {nx} is not 1")
    bases = []
    for b in x.blocks:
        d = b.shape[0]
        stacked = np.vstack([np.eye(d) - b, np.eye(d) - b.conj().T])
        _, s, vh = np.linalg.svd(stacked)
        s = np.concatenate([s, np.zeros(d - len(s))])
        bases.append(vh[s <= cutoff].conj().T)
    witness = None
    for k, basis in enumerate(bases):
        if basis.shape[1]:
            witness = State.vector_state(algebra, k, basis[:, 0])
            break
    return LevelSetReport(witness is not None, tuple(bases), witness)


class Polynomial:
    """Polynomial with nonnegative coefficients, stored as {exponent tuple: coefficient}."""

    def __init__(self, arity, coeffs):
        self.arity = arity
        self.coeffs = {tuple(int(e) for e in k): float(c) for k, c in coeffs.items() if c != 0}
        for k, c in self.coeffs.items():
            if len(k) != arity:
                raise ValueError("exponent tuple has wrong arity")
            if c < 0:
                raise ValueError("coefficients must be nonnegative for monotonicity")

    def __call__(self, *xs):
        if len(xs) != self.arity:
            raise ValueError(f"expected {self.arity} arguments")
        total = 0.0
        for k, c in self.coeffs.items():
            term = c
            for x, e in zip(xs, k):
                term = term * x ** e
            total = total + term
        return total

    def scaled(self, s):
        return Polynomial(self.arity, {k: s * c for k, c in self.coeffs.items()})

    def coefficient_max(self, other):
        keys = set(self.coeffs) | set(other.coeffs)
        return Polynomial(self.arity, {k: max(self.coeffs.get(k, 0.0), other.coeffs.get(k, 0.0)) for k in keys})

    def to_json(self):
        return [[list(k), c] for k, c in sorted(self.coeffs.items())]

    @classmethod
    def from_json(cls, arity, obj):
        return cls(arity, {tuple(k): c for k, c in obj})

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.arity == other.arity and self.coeffs == other.coeffs

    def __repr__(self):
        return f"Polynomial({self.arity}, {self.coeffs})"


@dataclass(frozen=True)
class AdmissibleTriple:
    """F(x, y, lx, ly) = C (x ly + y lx) + D lx ly with module functions G(x, l, d) and H(x, y)."""

    C: float
    D: float
    G: Polynomial
    H: Polynomial
    tag: str = "explicit"

    def __post_init__(self):
        if self.C < 1 or self.D < 0:
            raise ValueError("need C >= 1 and D >= 0")
        if self.G.arity != 3 or self.H.arity != 2:
            raise ValueError("G takes three arguments and H two")

    def F(self, x, y, lx, ly):
        return self.C * (x * ly + y * lx) + self.D * lx * ly

    @classmethod
    def leibniz(cls):
        return cls(1.0, 0.0,
                   Polynomial(3, {(1, 0, 1): 1.0, (0, 1, 1): 1.0}),
                   Polynomial(2, {(1, 1): 2.0}), "leibniz")

    @classmethod
    def module_derived(cls, C=1.0, D=0.0, rank=1):
        """G(x, l, d) = 8F(x, d, l, d) and H(x, y) = 8 rank F(x, y, x, y)."""
        G = Polynomial(3, {(1, 0, 1): 8 * C, (0, 1, 1): 8 * C + 8 * D})
        H = Polynomial(2, {(1, 1): 8 * rank * (2 * C + D)})
        return cls(C, D, G, H, "free-module-derived")

    def with_H(self, H):
        return AdmissibleTriple(self.C, self.D, self.G, H, "explicit")

    def join(self, other):
        """Triple valid for a direct sum: coefficientwise maxima of G and H."""
        for p in (self.G, other.G):
            if any(k[2] != 1 for k in p.coeffs):
                raise ValueError("direct-sum triple needs G linear in its last argument")
        for p in (self.H, other.H):
            if any(k != (1, 1) for k in p.coeffs):
                raise ValueError("direct-sum triple needs H bilinear")
        return AdmissibleTriple(max(self.C, other.C), max(self.D, other.D),
                                self.G.coefficient_max(other.G), self.H.coefficient_max(other.H), "explicit")

    def check(self, grid=10, upper=4.0):
        """Lower bounds and monotonicity on a grid; returns a list of failure strings."""
        pts = np.linspace(0.0, upper, grid)
        fails = []
        for x in product(pts, repeat=4):
            if self.F(*x) < x[0] * x[3] + x[1] * x[2] - 1e-12:
                fails.append(f"F{tuple(x)} below Leibniz bound")
                break
        for x in product(pts, repeat=3):
            if self.G(*x) < (x[0] + x[1]) * x[2] - 1e-12:
                fails.append(f"G{tuple(x)} below (x+y)z")
                break
        for x in product(pts, repeat=2):
            if self.H(*x) < 2 * x[0] * x[1] - 1e-12:
                fails.append(f"H{tuple(x)} below 2xy")
                break
        step = pts[1] - pts[0]
        for x in product(pts, repeat=3):
            for i in range(3):
                y = list(x)
                y[i] += step
                if self.G(*y) < self.G(*x) - 1e-12:
                    fails.append(f"G not monotone at {tuple(x)}")
        for x in product(pts, repeat=2):
            for i in range(2):
                y = list(x)
                y[i] += step
                if self.H(*y) < self.H(*x) - 1e-12:
                    fails.append(f"H not monotone at {tuple(x)}")
        return fails

    def to_json(self):
        return {"C": self.C, "D": self.D, "G": self.G.to_json(), "H": self.H.to_json(), "tag": self.tag}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["C"]), float(obj["D"]), Polynomial.from_json(3, obj["G"]),
                   Polynomial.from_json(2, obj["H"]), obj.get("tag", "explicit"))
