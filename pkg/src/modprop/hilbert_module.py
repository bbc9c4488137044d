"""Free Hilbert modules over finite-dimensional C*-algebras, D-norms and the modular Monge-Kantorovich metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (AdmissibleTriple, AlgebraElement, StructureError, batch_adjoint, batch_op_norm,
                      batch_product, op_norm)
from .quantum_metric import DEFAULT_NET_CAP, QuantumMetricSpace, extend_seminorm
from .results import CertifiedInterval, NetCapExceeded, Report

D_TOL = 1e-9


class ModuleElement:
    """Element of a free module A^n, stored as an (n, dim) array of flattened components."""

    __slots__ = ("algebra", "data")

    def __init__(self, algebra, components):
        if isinstance(components, np.ndarray) and components.ndim == 2:
            data = np.array(components, dtype=complex)
        else:
            comps = list(components)
            for c in comps:
                if not isinstance(c, AlgebraElement) or not c.algebra.same_as(algebra):
                    raise StructureError("module components must lie in the base algebra")
            data = np.array([c.vec for c in comps], dtype=complex)
        if data.ndim != 2 or data.shape[1] != algebra.dim or data.shape[0] < 1:
            raise StructureError(f"module data of shape {data.shape} does not fit the algebra")
        data.setflags(write=False)
        self.algebra = algebra
        self.data = data

    @property
    def rank(self):
        return self.data.shape[0]

    @property
    def components(self):
        return [self.algebra.from_vec(v) for v in self.data]

    def __add__(self, other):
        self._check(other)
        return ModuleElement(self.algebra, self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return ModuleElement(self.algebra, self.data - other.data)

    def __neg__(self):
        return ModuleElement(self.algebra, -self.data)

    def __mul__(self, c):
        return ModuleElement(self.algebra, self.data * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return ModuleElement(self.algebra, self.data / c)

    def act(self, a):
        """Left module action a . omega."""
        if not a.algebra.same_as(self.algebra):
            raise StructureError("acting element from another algebra")
        return ModuleElement(self.algebra, batch_product(self.algebra, a.vec[None, :], self.data))

    def _check(self, other):
        if not isinstance(other, ModuleElement) or other.data.shape != self.data.shape \
                or not other.algebra.same_as(self.algebra):
            raise StructureError("module elements of different shape")

    def allclose(self, other, atol=1e-10):
        return np.allclose(self.data, other.data, atol=atol, rtol=0)

    def __repr__(self):
        return f"ModuleElement(rank={self.rank}, data={self.data.tolist()})"


def batch_inner(algebra, u, v):
    """<u, v> = sum_k u_k v_k^* over stacks of shape (..., n, dim)."""
    return np.sum(batch_product(algebra, u, batch_adjoint(algebra, v)), axis=-2)


def inner_product(omega, eta):
    omega._check(eta)
    return omega.algebra.from_vec(batch_inner(omega.algebra, omega.data, eta.data))


def batch_hilbert_norm(algebra, data):
    g = batch_inner(algebra, data, data)
    return np.sqrt(np.maximum(batch_op_norm(algebra, g), 0.0))


def hilbert_norm(omega):
    return float(batch_hilbert_norm(omega.algebra, omega.data))


@dataclass
class MetrizedBundle:
    """Free module over a quantum metric space with its D-norm and admissible triple."""

    base: QuantumMetricSpace
    rank: int
    kind: str
    triple: AdmissibleTriple
    parts: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        self.M = extend_seminorm(self.base.lip)

    @property
    def algebra(self):
        return self.base.algebra

    def element(self, components):
        e = ModuleElement(self.algebra, components)
        if e.rank != self.rank:
            raise StructureError(f"expected rank {self.rank}, got {e.rank}")
        return e

    def zero(self):
        return ModuleElement(self.algebra, np.zeros((self.rank, self.algebra.dim), complex))

    def coordinate(self, k, scale=1.0):
        data = np.zeros((self.rank, self.algebra.dim), complex)
        data[k] = scale * self.algebra.unit_vec()
        return ModuleElement(self.algebra, data)

    def d_values(self, data):
        """D-norm of a stack (..., rank, dim)."""
        data = np.asarray(data)
        if self.kind == "direct_sum":
            total = 0.0
            for off, part in self.parts:
                total = total + part.d_values(data[..., off:off + part.rank, :]) ** 2
            return np.sqrt(total)
        m = np.max(self.M.values(data), axis=-1)
        return np.maximum(m, batch_hilbert_norm(self.algebra, data))

    def D(self, omega):
        return float(self.d_values(omega.data))

    def hilbert_norm(self, omega):
        return hilbert_norm(omega)

    def same_as(self, other):
        return self is other or (self.base is other.base and self.rank == other.rank
                                 and self.kind == other.kind and self.triple == other.triple
                                 and all(a[0] == b[0] and a[1].same_as(b[1]) for a, b in zip(self.parts, other.parts)))

    def to_json(self):
        obj = {"rank": self.rank, "d_norm": self.kind, "triple": self.triple.to_json()}
        if self.parts:
            obj["parts"] = [p.to_json() for _, p in self.parts]
        return obj


def d_norm_self(space: QuantumMetricSpace):
    """The algebra as a module over itself with D(a) = max(L(Re a), L(Im a), ||a||)."""
    t = AdmissibleTriple.module_derived(space.triple.C, space.triple.D, rank=1)
    return MetrizedBundle(space, 1, "self", t)


def d_norm_free(space: QuantumMetricSpace, n):
    t = AdmissibleTriple.module_derived(space.triple.C, space.triple.D, rank=n)
    return MetrizedBundle(space, n, "free", t)


def direct_sum_bundle(first: MetrizedBundle, second: MetrizedBundle):
    if first.base is not second.base:
        raise StructureError("direct sums need a common base space")
    parts = ((0, first), (first.rank, second))
    return MetrizedBundle(first.base, first.rank + second.rank, "direct_sum",
                          first.triple.join(second.triple), parts)


def split_direct_sum(bundle, omega):
    return [ModuleElement(bundle.algebra, omega.data[off:off + p.rank]) for off, p in bundle.parts]


def _constant_witness_lower(algebra, delta, rng, starts=6, iters=60):
    """sup over unit constant vectors c of ||sum_k conj(c_k) delta_k||, by alternating maximization."""
    best = 0.0
    for blk in algebra.split(delta):
        d = blk.shape[-1]
        for s in range(starts):
            u = rng.normal(size=d) + 1j * rng.normal(size=d)
            v = rng.normal(size=d) + 1j * rng.normal(size=d)
            u /= np.linalg.norm(u)
            v /= np.linalg.norm(v)
            for _ in range(iters):
                w = np.einsum("i,kij,j->k", u.conj(), blk, v)
                nw = np.linalg.norm(w)
                if nw == 0:
                    break
                c = w / nw
                m = np.einsum("k,kij->ij", c.conj(), blk)
                uu, sv, vh = np.linalg.svd(m)
                u, v = uu[:, 0], vh[0].conj()
                best = max(best, float(sv[0]))
    return best


def modular_mk(bundle: MetrizedBundle, omega, eta, seed=0):
    """Modular Monge-Kantorovich distance: sup over the D-ball of ||<omega - eta, xi>||."""
    delta = (omega - eta).data
    upper = float(batch_hilbert_norm(bundle.algebra, delta))
    if upper == 0.0:
        return CertifiedInterval.exact(0.0)
    if bundle.algebra.is_commutative or bundle.rank == 1:
        return CertifiedInterval(upper, upper, 0.0)
    rng = np.random.default_rng(seed)
    lower = _constant_witness_lower(bundle.algebra, delta, rng)
    dd = float(bundle.d_values(delta))
    g = batch_op_norm(bundle.algebra, batch_inner(bundle.algebra, delta, delta))
    lower = min(max(lower, float(g) / dd), upper)
    return CertifiedInterval(lower, upper, upper - lower)


def modular_mk_batch_upper(bundle, deltas):
    return batch_hilbert_norm(bundle.algebra, deltas)


def modular_mk_batch_lower(bundle, deltas):
    """Cheap certified lower bounds: exact for commutative bases and rank one, else max_k ||delta_k||."""
    if bundle.algebra.is_commutative or bundle.rank == 1:
        return batch_hilbert_norm(bundle.algebra, deltas)
    return np.max(batch_op_norm(bundle.algebra, deltas), axis=-1)


@dataclass
class Lattice:
    """Implicit grid of module elements whose real coordinates are integer multiples of `stride`.

    Coordinates are taken in a Hilbert-Schmidt orthonormal self-adjoint basis of the base algebra,
    separately for the real and imaginary parts of each component.
    """

    bundle: MetrizedBundle
    radius: float
    stride: float
    covering_radius: float

    @property
    def basis(self):
        return self.bundle.algebra.hermitian_basis()

    def coordinates(self, data):
        """(..., rank, dim) -> (..., rank, 2, nb) real coordinates."""
        b = self.basis
        data = np.asarray(data)
        adj = batch_adjoint(self.bundle.algebra, data)
        re, im = (data + adj) / 2, (data - adj) / 2j
        return np.stack([(re @ b.conj().T).real, (im @ b.conj().T).real], axis=-2)

    def from_coordinates(self, coords):
        b = self.basis
        return (coords[..., 0, :] + 1j * coords[..., 1, :]) @ b

    def contains(self, data):
        c = self.coordinates(data) / self.stride
        on_grid = np.all(np.abs(c - np.round(c)) <= 1e-7, axis=(-3, -2, -1))
        return on_grid & (self.bundle.d_values(data) <= self.radius + D_TOL)

    def snap(self, omega, error_bound):
        """Shrink toward 0 then round to the grid; returns a lattice point inside the D-ball."""
        s = min(1.0, error_bound / self.radius) if self.radius > 0 else 1.0
        c = self.coordinates((1 - s) * omega.data)
        pt = self.from_coordinates(self.stride * np.round(c / self.stride))
        return ModuleElement(self.bundle.algebra, pt)

    def size_estimate(self):
        n_coord = 2 * self.bundle.rank * len(self.basis)
        return float(2 * self.radius / self.stride + 1) ** n_coord

    def materialize(self, cap=DEFAULT_NET_CAP):
        return _enumerate_lattice(self, cap)


def _error_terms(bundle, stride):
    """(D-norm bound, Hilbert-norm bound) on a rounding error with coordinates in [-stride/2, stride/2]."""
    if bundle.kind == "direct_sum":
        ms, ns = [], []
        for _, part in bundle.parts:
            m, nn = _error_terms(part, stride)
            ms.append(m)
            ns.append(nn)
        return float(np.sqrt(np.sum(np.square(ms)))), float(np.sqrt(np.sum(np.square(ns))))
    space = bundle.base
    n = bundle.rank
    if space.is_commutative:
        eps_l = stride / space.metric.min_distance if space.metric.size > 1 else 0.0
        eps_n = stride * np.sqrt(n / 2)
    else:
        basis = bundle.algebra.hermitian_basis()
        eps_l = 0.5 * stride * float(np.sum(space.lip.values(basis)))
        eps_n = np.sqrt(n) * stride / np.sqrt(2) * float(np.sum(batch_op_norm(bundle.algebra, basis)))
    return max(eps_l, eps_n), eps_n


def lattice_covering_radius(bundle, stride):
    m, n = _error_terms(bundle, stride)
    return m + n


def d_ball_lattice(bundle: MetrizedBundle, radius, resolution, aligned=False):
    """Implicit lattice net of the D-ball with certified Hilbert-norm covering radius <= resolution.

    With `aligned` the stride divides the radius, so the ball's extreme coordinates are lattice points.
    """
    unit = lattice_covering_radius(bundle, 1.0)
    stride = resolution / unit
    if aligned and radius > 0 and stride < radius:
        stride = radius / np.ceil(radius / stride - 1e-12)
    cover = lattice_covering_radius(bundle, stride)
    while cover > resolution:
        # rounding in the cover formula can overshoot by an ulp
        stride = np.nextafter(stride, 0.0)
        cover = lattice_covering_radius(bundle, stride)
    if resolution > radius:
        # the origin alone covers: Hilbert norm <= D; the stride keeps every coordinate rounding to 0
        big = 2 * radius * np.sqrt(sum(bundle.algebra.block_dims)) * np.sqrt(bundle.rank) + 1.0
        return Lattice(bundle, radius, max(stride, big), radius)
    return Lattice(bundle, radius, stride, cover)


@dataclass
class ModuleNet:
    bundle: MetrizedBundle
    radius: float
    resolution: float
    stride: float
    points: np.ndarray  # (J, rank, dim)

    def __len__(self):
        return len(self.points)


def d_ball_net(bundle: MetrizedBundle, radius, resolution, cap=DEFAULT_NET_CAP):
    """Explicit net of the D-ball: every point has D <= radius, covering radius <= resolution."""
    if radius == 0:
        return ModuleNet(bundle, 0.0, resolution, resolution, np.zeros((1, bundle.rank, bundle.algebra.dim), complex))
    lat = d_ball_lattice(bundle, radius, resolution, aligned=True)
    pts = lat.materialize(cap)
    return ModuleNet(bundle, radius, lat.covering_radius, lat.stride, pts)


def _enumerate_lattice(lat: Lattice, cap):
    bundle = lat.bundle
    alg = bundle.algebra
    h, R = lat.stride, lat.radius
    basis = lat.basis
    nb = len(basis)
    rank = bundle.rank
    kmax = int(np.floor(R / h + 1e-9))
    vals = h * np.arange(-kmax, kmax + 1)
    if alg.is_commutative:
        # complex value per (component, point) inside the disk of radius R
        xs, ys = np.meshgrid(vals, vals, indexing="ij")
        disk = (xs + 1j * ys).reshape(-1)
        disk = disk[np.abs(disk) <= R + 1e-9]
        m = alg.dim
        slots = [(k, x) for k in range(rank) for x in range(m)]
        lip = bundle.base.metric.distances if m > 1 else None
        cur = np.zeros((1, 0), complex)
        for idx, (k, x) in enumerate(slots):
            if len(cur) * len(disk) > 50 * cap:
                raise NetCapExceeded(len(cur) * len(disk), cap)
            cand = np.repeat(cur, len(disk), axis=0)
            new = np.tile(disk, len(cur))
            ok = np.ones(len(new), bool)
            for jdx in range(idx):
                k2, y = slots[jdx]
                if k2 == k and lip is not None:
                    dxy = lip[x, y]
                    diff = new - cand[:, jdx]
                    ok &= (np.abs(diff.real) <= R * dxy + 1e-9) & (np.abs(diff.imag) <= R * dxy + 1e-9)
            # Hilbert norm: sum over components at point x
            same_point = [jdx for jdx in range(idx) if slots[jdx][1] == x]
            sq = np.abs(new) ** 2
            for jdx in same_point:
                sq = sq + np.abs(cand[:, jdx]) ** 2
            ok &= sq <= R * R + 1e-9
            cur = np.hstack([cand[ok], new[ok][:, None]])
        if len(cur) > cap:
            raise NetCapExceeded(len(cur), cap)
        data = np.zeros((len(cur), rank, m), complex)
        for idx, (k, x) in enumerate(slots):
            data[:, k, x] = cur[:, idx]
    else:
        n_coord = 2 * rank * nb
        est = float(len(vals)) ** n_coord
        if est > 50 * cap:
            raise NetCapExceeded(est, cap)
        grid = np.stack(np.meshgrid(*([vals] * n_coord), indexing="ij"), axis=-1).reshape(-1, rank, 2, nb)
        data = lat.from_coordinates(grid)
    keep = bundle.d_values(data) <= R + D_TOL
    data = data[keep]
    if len(data) > cap:
        raise NetCapExceeded(len(data), cap)
    return data


def _structured_sample(bundle, rng):
    """Random module element mixing large constants with Lipschitz perturbations."""
    alg = bundle.algebra
    data = np.zeros((bundle.rank, alg.dim), complex)
    for k in range(bundle.rank):
        c = rng.normal() + 1j * rng.normal()
        f = alg.random_element(rng).vec
        mode = rng.integers(3)
        if mode == 0:
            data[k] = f
        elif mode == 1:
            data[k] = c * alg.unit_vec() + rng.uniform(0.01, 1) * f
        else:
            data[k] = c * alg.unit_vec() + alg.random_self_adjoint(rng).vec * abs(c)
    return data * rng.uniform(0.1, 2.0)


def verify_bundle_axioms(bundle: MetrizedBundle, trials, seed=0, G=None, H=None, tol=1e-8):
    """Checks norm domination, inner and modular quasi-Leibniz and Cauchy-Schwarz on samples."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    G = G or bundle.triple.G
    H = H or bundle.triple.H
    alg = bundle.algebra
    L = bundle.base.lip
    worst = {"dominance": 0.0, "inner_leibniz": 0.0, "modular_leibniz": 0.0, "cauchy_schwarz": 0.0}

    def fail(name, t, ratio, w):
        w = {k: [[float(z.real), float(z.imag)] for z in np.ravel(np.asarray(v, complex))] for k, v in w.items()}
        return Report("bundle_axioms", False, t + 1, ratio, {"inequality": name, **w}, {"worst": worst})

    for t in range(trials):
        w = _structured_sample(bundle, rng)
        v = w if t % 5 == 0 else _structured_sample(bundle, rng)
        dw, dv = float(bundle.d_values(w)), float(bundle.d_values(v))
        hw = float(batch_hilbert_norm(alg, w))
        worst["dominance"] = max(worst["dominance"], hw / dw if dw > 0 else 0.0)
        if hw > dw + tol:
            return fail("dominance", t, hw / dw, {"omega": w})
        a = alg.random_self_adjoint(rng, rng.uniform(0.1, 2)) + alg.scalar(rng.uniform(-2, 2))
        aw = batch_product(alg, a.vec[None, :], w)
        lhs, rhs = float(bundle.d_values(aw)), G(op_norm(a), L(a), dw)
        worst["inner_leibniz"] = max(worst["inner_leibniz"], lhs / rhs if rhs > 0 else 0.0)
        if lhs > rhs + tol:
            return fail("inner_leibniz", t, lhs / rhs, {"omega": w, "a": a.vec})
        g = alg.from_vec(batch_inner(alg, w, v))
        lhs, rhs = max(L(g.re), L(g.im)), H(dw, dv)
        worst["modular_leibniz"] = max(worst["modular_leibniz"], lhs / rhs if rhs > 0 else 0.0)
        if lhs > rhs + tol:
            return fail("modular_leibniz", t, lhs / rhs, {"omega": w, "eta": v})
        gvw = alg.from_vec(batch_inner(alg, w, v))
        gvv = op_norm(alg.from_vec(batch_inner(alg, v, v)))
        gww = alg.from_vec(batch_inner(alg, w, w))
        gap = gww * gvv - gvw * gvw.adj
        lam = min(float(np.linalg.eigvalsh((b + b.conj().T) / 2).min()) for b in gap.blocks)
        scale = max(1.0, gvv * op_norm(gww))
        worst["cauchy_schwarz"] = max(worst["cauchy_schwarz"], -lam / scale)
        if lam < -tol * scale:
            return fail("cauchy_schwarz", t, -lam / scale, {"omega": w, "eta": v})
    return Report("bundle_axioms", True, trials, max(worst.values()), None, {"worst": worst})
