"""Builders for concrete spaces, bundles and bridges: correspondences, identity and perturbed-pivot
bridges, free-module lifts, direct-sum joins and finite anchor reduction."""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.linalg import expm

from .algebra import AdmissibleTriple, AlgebraElement, FiniteCStarAlgebra, StructureError, matrix_algebra
from .bridges import (AnchorFamily, BasicBridge, Embedding, ModularBridge, Settings, DEFAULT_SETTINGS,
                      basic_length, find_modular_target, find_target, height, reach_and_length)
from .hilbert_module import (D_TOL, Lattice, MetrizedBundle, ModuleElement, d_ball_lattice, d_ball_net,
                             d_norm_free, d_norm_self, direct_sum_bundle, lattice_covering_radius)
from .quantum_metric import (DEFAULT_NET_CAP, FiniteMetricSpace, QuantumMetricSpace, lip_from_group_action,
                             lip_from_metric)
from .results import CertificateFailure, NetCapExceeded

__all__ = ["FiniteMetricSpace", "FuzzyTorusParams", "Correspondence", "build_commutative_space",
           "build_fuzzy_torus", "correspondence_bridge", "identity_bridge", "perturbed_pivot_bridge",
           "lift_bridge_to_free_modules", "lift_bound", "q_envelope", "bridge_join_direct_sum",
           "finite_anchor_reduction", "net_family", "lattice_family"]


def build_commutative_space(metric: FiniteMetricSpace, triple=None):
    return lip_from_metric(metric, triple)


@dataclass(frozen=True)
class FuzzyTorusParams:
    q: int
    p: int = 1
    lengths: dict | None = None

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("q must be at least 2")
        lengths = self.lengths if self.lengths is not None else default_torus_lengths(self.q)
        lengths = {tuple(int(v) % self.q for v in k): float(ell) for k, ell in dict(lengths).items()}
        expected = {(n, m) for n in range(self.q) for m in range(self.q)} - {(0, 0)}
        if set(lengths) != expected:
            raise ValueError("lengths must cover every nonzero element of Z_q x Z_q exactly once")
        for (n, m), ell in lengths.items():
            if ell <= 0:
                raise ValueError("lengths must be positive")
            if abs(lengths[(-n % self.q, -m % self.q)] - ell) > 1e-12:
                raise ValueError("lengths must be symmetric under inversion")
        object.__setattr__(self, "lengths", lengths)


def default_torus_lengths(q):
    """Twice the word length in Z_q x Z_q; gives (2, 2, 4) for q = 2."""
    def wl(k):
        return min(k, q - k)
    return {(n, m): 2.0 * (wl(n) + wl(m)) for n in range(q) for m in range(q) if (n, m) != (0, 0)}


def clock_shift(q, p):
    w = np.exp(2j * np.pi * p / q)
    u = np.diag(w ** np.arange(q))
    v = np.roll(np.eye(q), 1, axis=0).astype(complex)
    return u, v


def build_fuzzy_torus(params: FuzzyTorusParams, triple=None):
    q, p = params.q, params.p
    u, v = clock_shift(q, p)
    if not np.allclose(u @ v, np.exp(2j * np.pi * p / q) * v @ u, atol=1e-12):
        raise StructureError("clock and shift fail the commutation relation")
    alg = matrix_algebra(q, f"fuzzy-torus-{q}")
    keys = sorted(params.lengths)
    unitaries = [[np.linalg.matrix_power(u, n) @ np.linalg.matrix_power(v, m)] for n, m in keys]
    lengths = [params.lengths[k] for k in keys]
    payload = {"q": q, "p": p, "coprime": gcd(p, q) == 1,
               "lengths": [[n, m, params.lengths[(n, m)]] for n, m in keys]}
    return lip_from_group_action(alg, unitaries, lengths, triple, payload)


@dataclass(frozen=True)
class Correspondence:
    relation: np.ndarray

    def __post_init__(self):
        r = np.array(self.relation, dtype=bool)
        if r.ndim != 2 or not r.any():
            raise StructureError("correspondence must be a nonempty boolean matrix")
        r.setflags(write=False)
        object.__setattr__(self, "relation", r)

    @classmethod
    def full(cls, nx, ny):
        return cls(np.ones((nx, ny), bool))

    @classmethod
    def diagonal(cls, n):
        return cls(np.eye(n, dtype=bool))

    @classmethod
    def from_pairs(cls, nx, ny, pairs):
        r = np.zeros((nx, ny), bool)
        for x, y in pairs:
            r[x, y] = True
        return cls(r)


def _as_bundle(obj):
    if isinstance(obj, MetrizedBundle):
        return obj
    if isinstance(obj, FiniteMetricSpace):
        return d_norm_self(build_commutative_space(obj))
    if isinstance(obj, QuantumMetricSpace):
        return d_norm_self(obj)
    raise TypeError("expected a metric space, quantum metric space or bundle")


def correspondence_basic(space_x: QuantumMetricSpace, space_y: QuantumMetricSpace, corr: Correspondence):
    """Basic bridge through C(X x Y) with the indicator of the relation as pivot."""
    nx, ny = space_x.metric.size, space_y.metric.size
    if corr.relation.shape != (nx, ny):
        raise StructureError(f"relation shape {corr.relation.shape} does not match spaces ({nx}, {ny})")
    ambient = FiniteCStarAlgebra((1,) * (nx * ny), "product")
    xs, ys = np.divmod(np.arange(nx * ny), ny)
    pivot = ambient.from_vec(corr.relation.reshape(-1).astype(complex))
    return BasicBridge(space_x, space_y, ambient, pivot,
                       Embedding.from_points(space_x.algebra, ambient, xs),
                       Embedding.from_points(space_y.algebra, ambient, ys))


def correspondence_bridge(x, y, corr: Correspondence, anchors=None, coanchors=None, label="correspondence"):
    """Modular bridge over a correspondence; anchors default to the zero family on both sides."""
    bx, by = _as_bundle(x), _as_bundle(y)
    basic = correspondence_basic(bx.base, by.base, corr)
    fa = anchors if isinstance(anchors, AnchorFamily) else (
        AnchorFamily.zero(bx) if anchors is None else AnchorFamily.explicit(bx, anchors))
    fb = coanchors if isinstance(coanchors, AnchorFamily) else (
        AnchorFamily.zero(by) if coanchors is None else AnchorFamily.explicit(by, coanchors))
    return ModularBridge(bx, by, basic, fa, fb, label)


def net_family(bundle, resolution, cap=DEFAULT_NET_CAP):
    """Explicit family: every lattice point of the unit D-ball, with its certified covering radius."""
    lat = d_ball_lattice(bundle, 1.0, resolution)
    data = lat.materialize(cap)
    return AnchorFamily(bundle, data, lat, lat.covering_radius)


def lattice_family(bundle, resolution):
    """Implicit family of all lattice points of the unit D-ball."""
    return AnchorFamily(bundle, None, d_ball_lattice(bundle, 1.0, resolution))


def identity_bridge(bundle: MetrizedBundle, anchors=None, resolution=0.05, label="identity"):
    """(A, 1, id, id, anchors, anchors); anchors default to the implicit lattice of the D-ball."""
    space = bundle.base
    basic = BasicBridge(space, space, space.algebra, space.algebra.unit(),
                        Embedding.identity(space.algebra), Embedding.identity(space.algebra))
    if anchors is None:
        fam = lattice_family(bundle, resolution)
    elif isinstance(anchors, AnchorFamily):
        fam = anchors
    else:
        fam = AnchorFamily.explicit(bundle, anchors)
    return ModularBridge(bundle, bundle, basic, fam, fam, label)


def perturbed_pivot_basic(space: QuantumMetricSpace, generator, epsilon):
    """Self-bridge through A (+) A with a (-> a (+) a and pivot 1 (+) exp(i epsilon H)."""
    alg = space.algebra
    h = generator if isinstance(generator, AlgebraElement) else alg.element([np.asarray(generator, complex)])
    emb = Embedding.diagonal(alg, 2)
    ambient = emb.target
    unit_blocks = [np.eye(d, dtype=complex) for d in alg.block_dims]
    rot = [expm(1j * epsilon * (b + b.conj().T) / 2) for b in h.blocks]
    pivot = ambient.element(unit_blocks + rot)
    return BasicBridge(space, space, ambient, pivot, emb, emb)


def perturbed_pivot_bridge(bundle: MetrizedBundle, generator, epsilon, anchors=None, resolution=0.05,
                           label="perturbed-pivot"):
    basic = perturbed_pivot_basic(bundle.base, generator, epsilon)
    fam = lattice_family(bundle, resolution) if anchors is None else anchors
    if not isinstance(fam, AnchorFamily):
        fam = AnchorFamily.explicit(bundle, fam)
    return ModularBridge(bundle, bundle, basic, fam, fam, label)


# ---------------------------------------------------------------- free-module lift

def _k_value(triple: AdmissibleTriple, lam):
    return triple.F(1 + 2 * lam, 1 + 2 * lam, 1.0, 1.0)


def lift_bound(lam, n, triple=None):
    """2n(lam + sqrt(1 + 4 n lam (K + 2 + 2 lam)) - 1) with K = F(1 + 2 lam, 1 + 2 lam, 1, 1)."""
    triple = triple or AdmissibleTriple.leibniz()
    k = _k_value(triple, lam)
    return 2 * n * (lam + np.sqrt(1 + 4 * n * lam * (k + 2 + 2 * lam)) - 1)


def q_envelope(lam, n, triple=None):
    """2 n lam (1 + 4 n F(1 + 2 lam, 1 + 2 lam, 1, 1) + 2 + 2 lam)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    triple = triple or AdmissibleTriple.leibniz()
    return 2 * n * lam * (1 + 4 * n * _k_value(triple, lam) + 2 + 2 * lam)


def _lift_targets(basic, data, scale, level_mode, settings, side):
    """Componentwise targets of the real and imaginary parts, rescaled by 1/scale."""
    src = basic.domain if side == "a" else basic.codomain
    tgt = basic.codomain if side == "a" else basic.domain
    bundle_alg = src.algebra
    out = np.zeros((len(data), data.shape[1], tgt.algebra.dim), complex)
    for j, omega in enumerate(data):
        for k, comp in enumerate(omega):
            a = bundle_alg.from_vec(comp)
            for part, coef in ((a.re, 1.0), (a.im, 1j)):
                if not np.any(np.abs(part.vec) > 0):
                    continue
                level = 1.0 if level_mode is None else level_mode[j]
                if level == 0:
                    continue
                try:
                    b = find_target(basic, part / level, 1.0, settings, side=side)
                except CertificateFailure as exc:
                    raise CertificateFailure(f"component {k} of anchor {j}: {exc}", step=k) from exc
                out[j, k] += coef * level * b.vec
    return out / scale


def lift_bridge_to_free_modules(base, n, resolution=0.5, settings=DEFAULT_SETTINGS, cap=DEFAULT_NET_CAP,
                                homogeneous=False, label=None, bundles=None):
    """Modular bridge between the free modules of rank n built from a basic bridge.

    Anchors are the domain D-ball net followed by the images of the codomain net; coanchors
    pair each with its componentwise target rescaled by 1/sqrt(1 + Q lambda).
    """
    basic = base.basic if isinstance(base, ModularBridge) else base
    A, B = basic.domain, basic.codomain
    if bundles is None:
        bundle_a, bundle_b = d_norm_free(A, n), d_norm_free(B, n)
    else:
        bundle_a, bundle_b = bundles
        if bundle_a.base is not A or bundle_b.base is not B or bundle_a.rank != n or bundle_b.rank != n:
            raise StructureError("supplied bundles do not match the base bridge and rank")
    lam = basic_length(basic, settings).upper
    triple = A.triple.join(B.triple) if A.triple != B.triple else A.triple
    k = _k_value(triple, lam)
    q = 4 * n * (k + 2 + 2 * lam)
    s = np.sqrt(1 + q * lam)
    lat_a = d_ball_lattice(bundle_a, 1.0, resolution)
    lat_b = d_ball_lattice(bundle_b, 1.0, resolution)
    net_a, net_b = lat_a.materialize(cap), lat_b.materialize(cap)
    lev_a = bundle_a.d_values(net_a) if homogeneous else None
    lev_b = bundle_b.d_values(net_b) if homogeneous else None
    img_a = _lift_targets(basic, net_a, s, lev_a, settings, "a")
    img_b = _lift_targets(basic, net_b, s, lev_b, settings, "b")
    anchors = np.concatenate([net_a, img_b])
    coanchors = np.concatenate([img_a, net_b])
    fa = AnchorFamily(bundle_a, anchors, lat_a, lat_a.covering_radius)
    fb = AnchorFamily(bundle_b, coanchors, lat_b, lat_b.covering_radius)
    bridge = ModularBridge(bundle_a, bundle_b, basic, fa, fb, label or f"lift-{n}")
    bridge.lift_info = {"lambda": lam, "K": k, "Q": q, "scale": s, "rank": n,
                        "bound": lift_bound(lam, n, triple), "homogeneous": homogeneous,
                        "resolution": resolution}
    return bridge


# ---------------------------------------------------------------- direct-sum join

def _same_basic(b1: BasicBridge, b2: BasicBridge):
    return b1.same_as(b2)


def bridge_join_direct_sum(g1: ModularBridge, g2: ModularBridge, cap=DEFAULT_NET_CAP, label=None):
    """Join of two bridges sharing their basic bridge, between the direct-sum bundles.

    Joined anchors are the pairs (j, k) whose concatenations stay in both unit D-balls.
    """
    if not _same_basic(g1.basic, g2.basic):
        raise StructureError("bridges are not iso-pivotal: basic bridges differ")
    da = direct_sum_bundle(g1.domain, g2.domain)
    db = direct_sum_bundle(g1.codomain, g2.codomain)
    if g1.matched_identity and g2.matched_identity and g1.anchors.implicit and g2.anchors.implicit \
            and abs(g1.anchors.lattice.stride - g2.anchors.lattice.stride) == 0:
        h = g1.anchors.lattice.stride
        lat = Lattice(da, 1.0, h, lattice_covering_radius(da, h))
        fam = AnchorFamily(da, None, lat)
        return ModularBridge(da, da, g1.basic, fam, fam, label or "join")
    a1, b1 = g1.anchors.materialize(cap), g1.coanchors.materialize(cap)
    a2, b2 = g2.anchors.materialize(cap), g2.coanchors.materialize(cap)
    ja, jb = np.meshgrid(np.arange(len(a1)), np.arange(len(a2)), indexing="ij")
    ja, jb = ja.ravel(), jb.ravel()
    da_vals = np.sqrt(g1.domain.d_values(a1)[ja] ** 2 + g2.domain.d_values(a2)[jb] ** 2)
    db_vals = np.sqrt(g1.codomain.d_values(b1)[ja] ** 2 + g2.codomain.d_values(b2)[jb] ** 2)
    keep = (da_vals <= 1 + D_TOL) & (db_vals <= 1 + D_TOL)
    ja, jb = ja[keep], jb[keep]
    anchors = np.concatenate([a1[ja], a2[jb]], axis=1)
    coanchors = np.concatenate([b1[ja], b2[jb]], axis=1)
    cover_a = _join_cover(g1.anchors, g2.anchors, da, anchors)
    cover_b = _join_cover(g1.coanchors, g2.coanchors, db, coanchors)
    fa = AnchorFamily(da, anchors, None, cover_a)
    fb = AnchorFamily(db, coanchors, None, cover_b)
    return ModularBridge(da, db, g1.basic, fa, fb, label or "join")


def _join_cover(f1: AnchorFamily, f2: AnchorFamily, joint: MetrizedBundle, data):
    """Certified covering radius of the joined family when both factors carry lattices of equal stride
    and every lattice point of the joint unit ball survives the pairing; otherwise None."""
    if f1.lattice is None or f2.lattice is None or f1.lattice.stride != f2.lattice.stride:
        return None
    h = f1.lattice.stride
    lat = Lattice(joint, 1.0, h, lattice_covering_radius(joint, h))
    try:
        pts = lat.materialize(DEFAULT_NET_CAP)
    except NetCapExceeded:
        return None
    have = {np.round(d / h).astype(np.int64).tobytes() for d in lat.coordinates(data)}
    need = [np.round(d / h).astype(np.int64).tobytes() for d in lat.coordinates(pts)]
    if all(k in have for k in need):
        return lat.covering_radius
    return None


# ---------------------------------------------------------------- finite anchor reduction

def finite_anchor_reduction(bridge: ModularBridge, epsilon, settings=DEFAULT_SETTINGS, cap=DEFAULT_NET_CAP):
    """Replace the anchors by finite epsilon-dense families of the two D-balls paired with modular targets.

    A bridge whose anchor families are explicit and already certified epsilon-dense is returned as is.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    fa, fb = bridge.anchors, bridge.coanchors
    if (not fa.implicit and not fb.implicit and fa.cover_radius is not None and fb.cover_radius is not None
            and max(fa.cover_radius, fb.cover_radius) <= epsilon):
        return bridge
    rev = bridge.reversed()
    lat_a = d_ball_lattice(bridge.domain, 1.0, epsilon)
    lat_b = d_ball_lattice(bridge.codomain, 1.0, epsilon)
    net_a, net_b = lat_a.materialize(cap), lat_b.materialize(cap)
    tgt_a = np.array([find_modular_target(bridge, ModuleElement(bridge.domain.algebra, w), 1.0, settings).data
                      for w in net_a])
    tgt_b = np.array([find_modular_target(rev, ModuleElement(bridge.codomain.algebra, w), 1.0, settings).data
                      for w in net_b])
    anchors = np.concatenate([net_a, tgt_b])
    coanchors = np.concatenate([tgt_a, net_b])
    new_a = AnchorFamily(bridge.domain, anchors, lat_a, lat_a.covering_radius)
    new_b = AnchorFamily(bridge.codomain, coanchors, lat_b, lat_b.covering_radius)
    return ModularBridge(bridge.domain, bridge.codomain, bridge.basic, new_a, new_b, bridge.label + "-reduced")
