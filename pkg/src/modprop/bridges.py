"""Modular bridges: bridge and deck seminorms, reach, height, imprint, length and target sets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .algebra import (AlgebraElement, FiniteCStarAlgebra, InvalidPivot, PIVOT_TOL, State, StructureError,
                      batch_adjoint, batch_op_norm, batch_product, one_level_set, op_norm)
from .hilbert_module import (D_TOL, Lattice, MetrizedBundle, ModuleElement, batch_hilbert_norm, batch_inner,
                             d_ball_net, modular_mk_batch_lower, modular_mk_batch_upper)
from .quantum_metric import DEFAULT_NET_CAP, SDP_SLACK, QuantumMetricSpace, ball_net, solve_conic
from .results import CertificateFailure, CertifiedInterval, NetCapExceeded, SolverFailure, interval_max

EXACT_SLACK = 1e-12


@dataclass(frozen=True)
class Settings:
    """Resolutions and caps used when a quantity needs a net."""

    imprint_resolution: float = 0.25
    reach_resolution: float = 0.25
    height_resolution: float = 0.25
    net_cap: int = DEFAULT_NET_CAP
    sample_points: int = 64
    seed: int = 0


DEFAULT_SETTINGS = Settings()


class Embedding:
    """Unital *-monomorphism given as an explicit linear map on flattened coordinates."""

    def __init__(self, source: FiniteCStarAlgebra, target: FiniteCStarAlgebra, matrix, validate=True):
        m = np.array(matrix, dtype=complex)
        if m.shape != (target.dim, source.dim):
            raise StructureError(f"embedding matrix has shape {m.shape}, expected {(target.dim, source.dim)}")
        m.setflags(write=False)
        self.source, self.target, self.matrix = source, target, m
        if validate:
            self.validate()

    def __call__(self, a):
        return self.target.from_vec(self.matrix @ a.vec)

    def apply(self, vecs):
        return np.asarray(vecs) @ self.matrix.T

    def validate(self, tol=1e-9):
        s, t = self.source, self.target
        if np.max(np.abs(self.matrix @ s.unit_vec() - t.unit_vec())) > tol:
            raise StructureError("embedding is not unital")
        units = np.eye(s.dim, dtype=complex)
        images = self.apply(units)
        if np.max(np.abs(self.apply(batch_adjoint(s, units)) - batch_adjoint(t, images))) > tol:
            raise StructureError("embedding does not preserve the involution")
        prods = batch_product(s, units[:, None, :], units[None, :, :])
        lhs = self.apply(prods)
        rhs = batch_product(t, images[:, None, :], images[None, :, :])
        if np.max(np.abs(lhs - rhs)) > tol:
            raise StructureError("embedding is not multiplicative on matrix units")
        if np.linalg.matrix_rank(self.matrix, tol=1e-9) < s.dim:
            raise StructureError("embedding is not injective")

    def selection(self):
        """For commutative algebras: index array p with (pi f)(z) = f(p[z]), else None."""
        if not (self.source.is_commutative and self.target.is_commutative):
            return None
        m = self.matrix
        if np.any((m != 0) & (m != 1)) or np.any(m.sum(axis=1) != 1):
            return None
        return np.argmax(m.real, axis=1)

    def same_as(self, other):
        return (self.source.same_as(other.source) and self.target.same_as(other.target)
                and self.matrix.tobytes() == other.matrix.tobytes())

    @classmethod
    def identity(cls, algebra):
        return cls(algebra, algebra, np.eye(algebra.dim), validate=False)

    @classmethod
    def from_points(cls, source, target, p):
        m = np.zeros((target.dim, source.dim))
        m[np.arange(target.dim), np.asarray(p)] = 1.0
        return cls(source, target, m)

    @classmethod
    def diagonal(cls, source, copies):
        """a -> a (+) a (+) ... into the direct sum of `copies` copies."""
        target = FiniteCStarAlgebra(source.block_dims * copies, source.label)
        m = np.vstack([np.eye(source.dim)] * copies)
        return cls(source, target, m)

    def to_json(self):
        return {"source": self.source.to_json(), "target": self.target.to_json(), "matrix": self.matrix}


class BasicBridge:
    """(ambient algebra, pivot, two embeddings) between two quantum metric spaces."""

    def __init__(self, domain: QuantumMetricSpace, codomain: QuantumMetricSpace, ambient: FiniteCStarAlgebra,
                 pivot: AlgebraElement, embed_a: Embedding, embed_b: Embedding):
        if not pivot.algebra.same_as(ambient):
            raise StructureError("pivot must lie in the ambient algebra")
        if not (embed_a.source.same_as(domain.algebra) and embed_b.source.same_as(codomain.algebra)):
            raise StructureError("embeddings do not start at the bridge's spaces")
        if not (embed_a.target.same_as(ambient) and embed_b.target.same_as(ambient)):
            raise StructureError("embeddings do not land in the ambient algebra")
        nx = op_norm(pivot)
        if abs(nx - 1) > PIVOT_TOL:
            raise InvalidPivot(f"pivot norm {nx} differs from 1")
        level = one_level_set(ambient, pivot)
        if not level.nonempty:
            raise InvalidPivot("pivot has empty 1-level set")
        self.domain, self.codomain, self.ambient = domain, codomain, ambient
        self.pivot, self.embed_a, self.embed_b = pivot, embed_a, embed_b
        self.level_set = level
        self._cache = {}

    @property
    def pivot_vec(self):
        return self.pivot.vec

    def bn(self, a, b):
        return float(self.bn_batch(a.vec, b.vec))

    def bn_batch(self, avecs, bvecs):
        x = self.pivot_vec
        left = batch_product(self.ambient, self.embed_a.apply(avecs), x)
        right = batch_product(self.ambient, x, self.embed_b.apply(bvecs))
        return batch_op_norm(self.ambient, left - right)

    def selection(self):
        """(|pivot|, p, q) when everything is commutative and embeddings are coordinate pullbacks."""
        if "sel" not in self._cache:
            p, q = self.embed_a.selection(), self.embed_b.selection()
            ok = (p is not None and q is not None and self.domain.is_commutative and self.codomain.is_commutative)
            self._cache["sel"] = (np.abs(self.pivot_vec), p, q) if ok else None
        return self._cache["sel"]

    @property
    def is_identity(self):
        return (self.domain is self.codomain and self.embed_a.same_as(self.embed_b)
                and self.pivot.vec.tobytes() == self.ambient.unit_vec().tobytes())

    def reversed(self):
        if "rev" not in self._cache:
            rev = BasicBridge(self.codomain, self.domain, self.ambient, self.pivot.adj, self.embed_b, self.embed_a)
            rev._cache["rev"] = self
            self._cache["rev"] = rev
        return self._cache["rev"]

    def same_as(self, other):
        return (self.domain is other.domain and self.codomain is other.codomain
                and self.ambient.same_as(other.ambient)
                and self.pivot.vec.tobytes() == other.pivot.vec.tobytes()
                and self.embed_a.same_as(other.embed_a) and self.embed_b.same_as(other.embed_b))

    def to_json(self):
        return {"ambient": self.ambient.to_json(), "pivot": self.pivot.vec,
                "embed_a": self.embed_a.matrix, "embed_b": self.embed_b.matrix}


@dataclass
class AnchorFamily:
    """Anchors in the unit D-ball; either explicit data or the implicit lattice points of the ball.

    `cover_radius` certifies that every point of the unit D-ball lies within that modular
    Monge-Kantorovich distance of the family.
    """

    bundle: MetrizedBundle
    data: np.ndarray | None = None
    lattice: Lattice | None = None
    cover_radius: float | None = None

    def __post_init__(self):
        if self.data is None and self.lattice is None:
            raise ValueError("family needs explicit data or a lattice")
        if self.data is not None:
            d = np.array(self.data, dtype=complex)
            if d.ndim != 3 or d.shape[1:] != (self.bundle.rank, self.bundle.algebra.dim) or len(d) == 0:
                raise StructureError("anchor data must have shape (J, rank, dim) with J >= 1")
            d.setflags(write=False)
            self.data = d
        if self.lattice is not None and self.cover_radius is None:
            self.cover_radius = self.lattice.covering_radius

    @property
    def implicit(self):
        return self.data is None

    def __len__(self):
        if self.data is None:
            raise NetCapExceeded(self.lattice.size_estimate(), 0)
        return len(self.data)

    def materialize(self, cap=DEFAULT_NET_CAP):
        if self.data is None:
            self.data = self.lattice.materialize(cap)
            self.data.setflags(write=False)
        return self.data

    def max_d(self):
        return 1.0 if self.data is None else float(np.max(self.bundle.d_values(self.data)))

    def nearest(self, omega):
        """Index (or lattice point) nearest to omega in Hilbert norm, with that distance."""
        if self.data is None:
            m, _ = _lattice_error_terms(self.lattice)
            pt = self.lattice.snap(omega, m)
            return pt.data, float(batch_hilbert_norm(self.bundle.algebra, omega.data - pt.data)), None
        dist = modular_mk_batch_upper(self.bundle, self.data - omega.data[None])
        j = int(np.argmin(dist))
        return self.data[j], float(dist[j]), j

    @classmethod
    def explicit(cls, bundle, elements, cover_radius=None, lattice=None):
        data = np.array([e.data if isinstance(e, ModuleElement) else e for e in elements], dtype=complex)
        return cls(bundle, data, lattice, cover_radius)

    @classmethod
    def zero(cls, bundle):
        return cls(bundle, np.zeros((1, bundle.rank, bundle.algebra.dim), complex), None, 1.0)


def _lattice_error_terms(lat):
    from .hilbert_module import _error_terms
    return _error_terms(lat.bundle, lat.stride)


@dataclass
class BridgeQuantities:
    basic_reach: CertifiedInterval
    height: CertifiedInterval
    modular_reach: CertifiedInterval
    imprint: CertifiedInterval
    reach: CertifiedInterval
    length: CertifiedInterval

    def to_json(self):
        return {k: getattr(self, k).to_json() for k in
                ("basic_reach", "height", "modular_reach", "imprint", "reach", "length")}


class ModularBridge:
    def __init__(self, domain: MetrizedBundle, codomain: MetrizedBundle, basic: BasicBridge,
                 anchors: AnchorFamily, coanchors: AnchorFamily, label=""):
        if basic.domain is not domain.base or basic.codomain is not codomain.base:
            raise StructureError("basic bridge spaces differ from the bundles' base spaces")
        if anchors.bundle is not domain or coanchors.bundle is not codomain:
            raise StructureError("anchor families must live in the bridge's bundles")
        if anchors.implicit or coanchors.implicit:
            if not (anchors is coanchors):
                raise StructureError("implicit anchor families are only supported for matched identity anchors")
        elif len(anchors.data) != len(coanchors.data):
            raise StructureError("anchors and coanchors need the same index set")
        for fam, name in ((anchors, "anchor"), (coanchors, "coanchor")):
            worst = fam.max_d()
            if worst > 1 + D_TOL:
                raise StructureError(f"{name} with D-norm {worst} outside the unit ball")
        self.domain, self.codomain, self.basic = domain, codomain, basic
        self.anchors, self.coanchors = anchors, coanchors
        self.label = label
        self._cache = {}
        self._reverse = None

    @property
    def matched_identity(self):
        return self.anchors is self.coanchors and self.basic.is_identity and self.domain is self.codomain

    def bn(self, a, b):
        return self.basic.bn(a, b)

    def reversed(self):
        if self._reverse is None:
            rev = ModularBridge(self.codomain, self.domain, self.basic.reversed(), self.coanchors, self.anchors,
                                self.label + "*" if not self.label.endswith("*") else self.label[:-1])
            rev._reverse = self
            self._reverse = rev
        return self._reverse


def reverse_bridge(bridge):
    return bridge.reversed()


def bridges_structurally_equal(g1, g2):
    return (g1.domain is g2.domain and g1.codomain is g2.codomain and g1.basic.same_as(g2.basic)
            and g1.anchors is g2.anchors and g1.coanchors is g2.coanchors)


def bridge_seminorm(bridge, a, b):
    return bridge.basic.bn(a, b)


def _deck_values(bridge, wdata, hdata, cap=DEFAULT_NET_CAP, chunk=256):
    """dn(w_i, h_i) for stacks (I, rank, dim) against the full anchor family."""
    A = bridge.anchors.materialize(cap)
    B = bridge.coanchors.materialize(cap)
    return _deck_core(bridge.basic, bridge.domain.algebra, bridge.codomain.algebra, wdata, hdata, A, B, chunk)


def _deck_core(basic, alg_a, alg_b, wdata, hdata, A, B, chunk=256):
    sel = basic.selection()
    out = np.zeros(len(wdata))
    if sel is not None:
        w, p, q = sel
        live = np.flatnonzero(w > 0)
        # values at the selected points: (J, rank, |Z|)
        U_all = A[:, :, p[live]]
        V_all = B[:, :, q[live]]
        for start in range(0, len(wdata), chunk):
            U = wdata[start:start + chunk][:, :, p[live]]
            V = hdata[start:start + chunk][:, :, q[live]]
            best = np.zeros(len(U))
            for zi in range(len(live)):
                g = U[:, :, zi] @ U_all[:, :, zi].conj().T - V[:, :, zi] @ V_all[:, :, zi].conj().T
                best = np.maximum(best, w[live[zi]] * np.max(np.abs(g), axis=1))
            out[start:start + chunk] = best
        return out
    for start in range(0, len(wdata), max(1, chunk // 8)):
        W = wdata[start:start + max(1, chunk // 8)]
        H = hdata[start:start + max(1, chunk // 8)]
        ga = batch_inner(alg_a, W[:, None], A[None])
        gb = batch_inner(alg_b, H[:, None], B[None])
        v1 = basic.bn_batch(ga, gb)
        v2 = basic.bn_batch(batch_adjoint(alg_a, ga), batch_adjoint(alg_b, gb))
        out[start:start + len(W)] = np.maximum(v1.max(axis=1), v2.max(axis=1))
    return out


def deck_seminorm(bridge, omega, eta):
    if bridge.anchors.implicit and bridge.matched_identity:
        # identity pivot and embeddings: dn <= ||omega - eta|| sup_k ||omega_k|| <= ||omega - eta||
        raise NetCapExceeded(bridge.anchors.lattice.size_estimate(), 0)
    return float(_deck_values(bridge, omega.data[None], eta.data[None])[0])


def deck_upper(bridge, omega, eta):
    """Certified upper bound on dn(omega, eta), exact when the anchors are explicit.

    For matched implicit anchors with a common embedding, pi(a)x - x pi(b) = pi(a - b)x + [pi(b), x - 1]
    gives dn <= ||omega - eta|| + 2 ||x - 1|| min(||omega||, ||eta||).
    """
    if bridge.anchors.implicit:
        alg = bridge.domain.algebra
        diff = float(batch_hilbert_norm(alg, omega.data - eta.data))
        if bridge.matched_identity:
            return diff
        small = min(float(batch_hilbert_norm(alg, omega.data)), float(batch_hilbert_norm(alg, eta.data)))
        basic = bridge.basic
        if bridge.domain is bridge.codomain and basic.embed_a.same_as(basic.embed_b):
            return diff + 2 * op_norm(basic.pivot - basic.ambient.unit()) * small
        return float(batch_hilbert_norm(alg, omega.data)) + float(batch_hilbert_norm(alg, eta.data))
    return deck_seminorm(bridge, omega, eta)


def modular_reach(bridge, settings=DEFAULT_SETTINGS):
    key = ("mr", settings.net_cap)
    if key not in bridge._cache:
        if bridge.matched_identity:
            bridge._cache[key] = CertifiedInterval.exact(0.0)
        elif bridge.anchors.implicit:
            bridge._cache[key] = _implicit_modular_reach(bridge, settings)
        else:
            A = bridge.anchors.materialize(settings.net_cap)
            B = bridge.coanchors.materialize(settings.net_cap)
            vals = _deck_values(bridge, A, B, settings.net_cap)
            v = float(np.max(vals))
            bridge._cache[key] = CertifiedInterval(v, v + EXACT_SLACK * (1 + v), EXACT_SLACK * (1 + v))
    return bridge._cache[key]


def _implicit_modular_reach(bridge, settings):
    """Matched implicit anchors: dn(w, w) <= ||[pi(a), x - 1]|| <= 2 ||x - 1|| when both embeddings agree,
    and at most 2 in general; the lower end comes from sampled lattice points."""
    basic = bridge.basic
    upper = 2.0
    if bridge.domain is bridge.codomain and basic.embed_a.same_as(basic.embed_b):
        upper = min(upper, 2 * op_norm(basic.pivot - basic.ambient.unit()))
    fam = bridge.anchors
    rng = np.random.default_rng(settings.seed)
    m, _ = _lattice_error_terms(fam.lattice)
    pts = np.array([fam.lattice.snap(ModuleElement(fam.bundle.algebra, w), m).data
                    for w in _ball_samples(fam.bundle, settings.sample_points, rng)])
    vals = _deck_core(basic, bridge.domain.algebra, bridge.codomain.algebra, pts, pts, pts, pts)
    lower = min(float(np.max(vals)), upper)
    return CertifiedInterval(lower, upper, upper - lower)


# ---------------------------------------------------------------- basic reach

def _pruefer_trees(m):
    if m == 2:
        yield [(0, 1)]
        return
    for seq in product(range(m), repeat=m - 2):
        degree = [1] * m
        for s in seq:
            degree[s] += 1
        edges = []
        seq = list(seq)
        for s in seq:
            leaf = min(i for i in range(m) if degree[i] == 1)
            edges.append((leaf, s))
            degree[leaf] -= 1
            degree[s] -= 1
        u, v = [i for i in range(m) if degree[i] == 1]
        edges.append((u, v))
        yield edges


def lipschitz_vertices(metric):
    """Vertices of {f : f(0) = 0, |f(x) - f(y)| <= d(x, y)} via spanning trees of tight edges."""
    m = metric.size
    if m == 1:
        return np.zeros((1, 1))
    d = metric.distances
    signs = np.array(list(product((-1.0, 1.0), repeat=m - 1)))
    found = []
    for edges in _pruefer_trees(m):
        adj = {i: [] for i in range(m)}
        for e, (u, v) in enumerate(edges):
            adj[u].append((v, e, 1.0))
            adj[v].append((u, e, -1.0))
        path = np.zeros((m, m - 1))
        stack, seen = [0], {0}
        while stack:
            u = stack.pop()
            for v, e, s in adj[u]:
                if v not in seen:
                    seen.add(v)
                    path[v] = path[u]
                    path[v, e] = s
                    stack.append(v)
        lengths = np.array([d[u, v] for u, v in edges])
        found.append((signs * lengths) @ path.T)
    cand = np.vstack(found)
    i, j = np.triu_indices(m, 1)
    ok = np.all(np.abs(cand[:, i] - cand[:, j]) <= d[i, j] * (1 + 1e-12) + 1e-12, axis=1)
    return np.unique(np.round(cand[ok], 12), axis=0)


def commutative_inner_value(src_vals, w, p, q, tgt_metric, level=1.0):
    """min over g with L(g) <= level of max_z w_z |f(p z) - g(q z)|, for a stack of f."""
    live = np.flatnonzero(w > 0)
    inv = 1.0 / w[live]
    F = np.asarray(src_vals)[..., p[live]]
    dq = tgt_metric.distances[np.ix_(q[live], q[live])]
    gap = F[..., :, None] - F[..., None, :] - level * dq
    denom = inv[:, None] + inv[None, :]
    return np.maximum(np.max((gap / denom).reshape(gap.shape[:-2] + (-1,)), axis=-1), 0.0)


def _commutative_direction(src_metric, tgt_metric, w, p, q):
    if src_metric.size > 6:
        return None
    verts = lipschitz_vertices(src_metric)
    return float(np.max(commutative_inner_value(verts, w, p, q, tgt_metric)))


def _nc_inner_problem(bridge_basic, src_side):
    """Parametrized SDP: min over L(b) <= 1 of ||pi_src(a) x - x pi_tgt(b)|| (or the mirrored form)."""
    key = ("inner", src_side)
    if key not in bridge_basic._cache:
        if src_side == "a":
            tgt, emb_t = bridge_basic.codomain, bridge_basic.embed_b
        else:
            tgt, emb_t = bridge_basic.domain, bridge_basic.embed_a
        D = bridge_basic.ambient
        herm = tgt.algebra.hermitian_basis()
        c = cp.Variable(len(herm))
        P = cp.Parameter(D.dim, complex=True)
        x = bridge_basic.pivot_vec if src_side == "a" else bridge_basic.pivot.adj.vec
        imgs = emb_t.apply(herm)
        if src_side == "a":
            tgt_terms = batch_product(D, x[None, :], imgs)
        else:
            tgt_terms = batch_product(D, x[None, :], imgs)
        expr_vec = P - tgt_terms.T @ c
        objs = []
        for o, d in zip(D.offsets, D.block_dims):
            blk = cp.reshape(expr_vec[o:o + d * d], (d, d), order="C")
            objs.append(cp.sigma_max(blk) if d > 1 else cp.abs(expr_vec[o]))
        t = cp.Variable()
        cons = [o <= t for o in objs] + tgt.lip.constraints(c, herm, 1.0)
        prob = cp.Problem(cp.Minimize(t), cons)
        bridge_basic._cache[key] = (prob, P, c, herm)
    return bridge_basic._cache[key]


def _nc_inner_value(basic, src_side, avec):
    prob, P, c, herm = _nc_inner_problem(basic, src_side)
    D = basic.ambient
    if src_side == "a":
        P.value = batch_product(D, basic.embed_a.apply(avec), basic.pivot_vec)
    else:
        P.value = batch_product(D, basic.embed_b.apply(avec), basic.pivot.adj.vec)
    return solve_conic(prob, "inner bridge-seminorm SDP")


def _companion_bound(basic, side):
    """sup over L(a) <= 1 of bn(a, a) when both sides are the same space."""
    space = basic.domain if side == "a" else basic.codomain
    basis = space.quotient_basis()
    box = space.coefficient_box() if not space.is_commutative else None
    if box is None:
        return None
    x = basic.pivot_vec if side == "a" else basic.pivot.adj.vec
    ea, eb = (basic.embed_a, basic.embed_b) if side == "a" else (basic.embed_b, basic.embed_a)
    D = basic.ambient
    k = batch_product(D, ea.apply(basis), x[None]) - batch_product(D, x[None], eb.apply(basis))
    return float(np.sum(box * batch_op_norm(D, k)))


def _direction_reach(basic, side, settings):
    """sup over the source L-ball of inf over the target L-ball of the bridge seminorm."""
    sel = basic.selection()
    src = basic.domain if side == "a" else basic.codomain
    tgt = basic.codomain if side == "a" else basic.domain
    if sel is not None:
        w, p, q = sel
        if side == "b":
            p, q = q, p
        v = _commutative_direction(src.metric, tgt.metric, w, p, q)
        if v is not None:
            return CertifiedInterval(v, v + EXACT_SLACK * (1 + v), EXACT_SLACK * (1 + v))
        net = ball_net(src, 1.0, settings.reach_resolution, settings.net_cap)
        vals = commutative_inner_value(net.points.real, w, p, q, tgt.metric)
        lo = float(np.max(vals))
        return CertifiedInterval(lo, lo + net.resolution, net.resolution)
    # noncommutative: companion bounds, trivial bound and sampled lower bound
    uppers = [max(src.quotient_radius, 0.0)]
    same = src is tgt
    if same:
        comp = _companion_bound(basic, side)
        if comp is not None:
            uppers.append(comp)
    rng = np.random.default_rng(settings.seed)
    lower = 0.0
    try:
        net = ball_net(src, 1.0, settings.reach_resolution, settings.net_cap)
    except NetCapExceeded:
        net = None
    if net is not None:
        pts = net.points
        order = np.arange(len(pts))
        if same:
            diag = _diagonal_values(basic, side, pts)
            lip = 2.0
            if basic.embed_a.same_as(basic.embed_b):
                lip = 2 * op_norm(basic.pivot - basic.ambient.unit())
            uppers.append(float(np.max(diag)) + lip * net.resolution)
            order = np.argsort(-diag, kind="stable")
        full = len(pts) <= settings.sample_points
        if not full:
            half = settings.sample_points // 2
            rest = rng.choice(order[half:], settings.sample_points - half, replace=False)
            order = np.concatenate([order[:half], rest])
        if min(uppers) > 0:
            vals = [_nc_inner_value(basic, side, pts[i]) for i in order]
            lower = max(0.0, max(vals) * (1 - SDP_SLACK) - SDP_SLACK)
            if full:
                uppers.append(max(vals) + SDP_SLACK + net.resolution)
    upper = min(uppers)
    lower = min(lower, upper)
    return CertifiedInterval(lower, upper, upper - lower)


def _diagonal_values(basic, side, vecs):
    """bn(a, a) from the given side, for bridges from a space to itself."""
    x = basic.pivot_vec if side == "a" else basic.pivot.adj.vec
    ea, eb = (basic.embed_a, basic.embed_b) if side == "a" else (basic.embed_b, basic.embed_a)
    D = basic.ambient
    return batch_op_norm(D, batch_product(D, ea.apply(vecs), x[None]) - batch_product(D, x[None], eb.apply(vecs)))


def basic_reach(bridge, settings=DEFAULT_SETTINGS):
    basic = bridge.basic if isinstance(bridge, ModularBridge) else bridge
    key = ("br", settings)
    if key not in basic._cache:
        if basic.is_identity:
            basic._cache[key] = CertifiedInterval.exact(0.0)
        else:
            basic._cache[key] = _direction_reach(basic, "a", settings).max(_direction_reach(basic, "b", settings))
    return basic._cache[key]


# ---------------------------------------------------------------- height

def _support_points(basic, side):
    """Points of the space carrying pulled-back level-set states (commutative case)."""
    w, p, q = basic.selection()
    pivot = basic.pivot_vec
    K = np.flatnonzero(np.abs(pivot - 1) <= 1e-9)
    idx = p if side == "a" else q
    return np.unique(idx[K])


def commutative_height_side(metric, support):
    d = metric.distances
    return float(np.max(np.min(d[:, support], axis=1)))


def _covers_all_states(basic, side):
    """True when some block of the level set is a full block that the embedding fills bijectively."""
    emb = basic.embed_a if side == "a" else basic.embed_b
    src = emb.source
    D = basic.ambient
    for k, (o, d) in enumerate(zip(D.offsets, D.block_dims)):
        basis = basic.level_set.bases[k]
        if basis.shape[1] != d or d * d != src.dim:
            continue
        comp = emb.matrix[o:o + d * d]
        if np.linalg.matrix_rank(comp, tol=1e-9) == src.dim:
            return True
    return False


def _sphere_net(h):
    """Points of the unit sphere in R^3 within Euclidean distance h of every sphere point."""
    k = max(1, int(np.ceil(np.sqrt(3) / h)))
    g = np.linspace(-1, 1, k + 1)
    pts = []
    for axis in range(3):
        for s in (-1.0, 1.0):
            a, b = np.meshgrid(g, g, indexing="ij")
            face = np.zeros((a.size, 3))
            face[:, axis] = s
            face[:, (axis + 1) % 3] = a.ravel()
            face[:, (axis + 2) % 3] = b.ravel()
            pts.append(face)
    pts = np.vstack(pts)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return np.unique(np.round(pts, 12), axis=0), 2.0 / k


def _nc_height_problem(basic, side):
    key = ("hprob", side)
    if key not in basic._cache:
        space = basic.domain if side == "a" else basic.codomain
        emb = basic.embed_a if side == "a" else basic.embed_b
        D = basic.ambient
        herm = space.algebra.hermitian_basis()
        c = cp.Variable(len(herm))
        t = cp.Variable()
        w = cp.Parameter(len(herm))
        cons = space.lip.constraints(c, herm, 1.0)
        imgs = emb.apply(herm)
        for k, (o, d) in enumerate(zip(D.offsets, D.block_dims)):
            basis = basic.level_set.bases[k]
            if basis.shape[1] == 0:
                continue
            comp = [basis.conj().T @ m[o:o + d * d].reshape(d, d) @ basis for m in imgs]
            mats = np.array([0.5 * (np.block([[m.real, -m.imag], [m.imag, m.real]])
                                    + np.block([[m.real, -m.imag], [m.imag, m.real]]).T) for m in comp])
            expr = sum(c[i] * mats[i] for i in range(len(mats)))
            cons.append(expr << t * np.eye(mats.shape[1]))
        prob = cp.Problem(cp.Maximize(w @ c - t), cons)
        basic._cache[key] = (prob, w, herm)
    return basic._cache[key]


def _nc_height_point(basic, side, state_vec):
    prob, w, herm = _nc_height_problem(basic, side)
    w.value = (herm @ state_vec).real
    return solve_conic(prob, "height SDP")


def _height_side(basic, side, settings):
    space = basic.domain if side == "a" else basic.codomain
    sel = basic.selection()
    if sel is not None:
        v = commutative_height_side(space.metric, _support_points(basic, side))
        return CertifiedInterval.exact(v)
    if _covers_all_states(basic, side):
        return CertifiedInterval.exact(0.0)
    alg = space.algebra
    if alg.block_dims == (2,):
        pauli = [np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]) + 0j]
        r = max(space.quotient_radius, 1e-12)
        h = settings.height_resolution / r
        pts, cover = _sphere_net(min(h, 1.0))
        vals = []
        for n in pts:
            rho = 0.5 * (np.eye(2) + sum(n[i] * pauli[i] for i in range(3)))
            vals.append(_nc_height_point(basic, side, State(alg, [rho]).vec))
        lo = max(0.0, max(vals) * (1 - SDP_SLACK) - SDP_SLACK)
        up = max(vals) * (1 + SDP_SLACK) + SDP_SLACK + r * cover
        return CertifiedInterval(lo, min(up, space.diameter_bound), r * cover)
    rng = np.random.default_rng(settings.seed)
    vals = [_nc_height_point(basic, side, alg.random_state(rng, pure=True).vec) for _ in range(settings.sample_points)]
    lo = max(0.0, max(vals) * (1 - SDP_SLACK) - SDP_SLACK)
    return CertifiedInterval(lo, max(lo, space.diameter_bound), space.diameter_bound - lo)


def height(bridge, settings=DEFAULT_SETTINGS):
    basic = bridge.basic if isinstance(bridge, ModularBridge) else bridge
    key = ("h", settings)
    if key not in basic._cache:
        if basic.is_identity:
            basic._cache[key] = CertifiedInterval.exact(0.0)
        else:
            basic._cache[key] = _height_side(basic, "a", settings).max(_height_side(basic, "b", settings))
    return basic._cache[key]


def generic_commutative_height(basic):
    """Height via one minimax LP per Dirac state; cross-check for the exact support formula."""
    out = 0.0
    w, p, q = basic.selection()
    K = np.flatnonzero(np.abs(basic.pivot_vec - 1) <= 1e-9)
    for side, space, idx in (("a", basic.domain, p), ("b", basic.codomain, q)):
        metric = space.metric
        m = metric.size
        supp = np.unique(idx[K])
        a_rows, b_vec = space.lip.lp_rows()
        for x0 in range(m):
            # maximize f(x0) - t subject to f(s) <= t on the support and Lip(f) <= 1
            c = np.zeros(m + 1)
            c[x0] = -1.0
            c[m] = 1.0
            rows = [np.hstack([a_rows, np.zeros((len(a_rows), 1))]), np.hstack([-a_rows, np.zeros((len(a_rows), 1))])]
            rhs = [b_vec, b_vec]
            for s in supp:
                r = np.zeros(m + 1)
                r[s] = 1.0
                r[m] = -1.0
                rows.append(r[None])
                rhs.append(np.zeros(1))
            bounds = [(None, None)] * (m + 1)
            bounds[supp[0]] = (0, 0)
            res = linprog(c, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=bounds, method="highs")
            if res.status != 0:
                raise SolverFailure(res.message)
            out = max(out, -res.fun)
    return out


# ---------------------------------------------------------------- imprint

def _ball_samples(bundle, count, rng):
    data = rng.normal(size=(count, bundle.rank, bundle.algebra.dim)) \
        + 1j * rng.normal(size=(count, bundle.rank, bundle.algebra.dim))
    d = bundle.d_values(data)
    return data / d[:, None, None]


def _imprint_side(family: AnchorFamily, settings):
    bundle = family.bundle
    excess = max(0.0, family.max_d() - 1.0)
    uppers = []
    if family.cover_radius is not None:
        uppers.append(family.cover_radius)
    lower = 0.0
    if not family.implicit:
        A = family.data
        uppers.append(float(np.min(1.0 + batch_hilbert_norm(bundle.algebra, A))))
        try:
            net = d_ball_net(bundle, 1.0, settings.imprint_resolution, settings.net_cap)
            pts = net.points
            swept = True
        except NetCapExceeded:
            pts = _ball_samples(bundle, settings.sample_points, np.random.default_rng(settings.seed))
            swept = False
        best_up = np.full(len(pts), np.inf)
        best_lo = np.full(len(pts), np.inf)
        chunk = max(1, 2_000_000 // max(1, len(A) * bundle.rank * bundle.algebra.dim))
        for s in range(0, len(pts), chunk):
            diff = pts[s:s + chunk, None] - A[None]
            best_up[s:s + chunk] = np.min(modular_mk_batch_upper(bundle, diff), axis=1)
            best_lo[s:s + chunk] = np.min(modular_mk_batch_lower(bundle, diff), axis=1)
        lower = float(np.max(best_lo))
        if swept:
            uppers.append(float(np.max(best_up)) + net.resolution)
    upper = min(uppers) + excess
    lower = min(lower, upper)
    return CertifiedInterval(lower, upper, upper - lower)


def imprint(bridge, settings=DEFAULT_SETTINGS):
    key = ("imp", settings)
    if key not in bridge._cache:
        a = _imprint_side(bridge.anchors, settings)
        b = a if bridge.coanchors is bridge.anchors else _imprint_side(bridge.coanchors, settings)
        bridge._cache[key] = a.max(b)
    return bridge._cache[key]


def reach_and_length(bridge, settings=DEFAULT_SETTINGS):
    key = ("all", settings)
    if key not in bridge._cache:
        br = basic_reach(bridge, settings)
        h = height(bridge, settings)
        mr = modular_reach(bridge, settings)
        imp = imprint(bridge, settings)
        reach = br.max(mr + imp)
        bridge._cache[key] = BridgeQuantities(br, h, mr, imp, reach, h.max(reach))
    return bridge._cache[key]


def bridge_length(bridge, settings=DEFAULT_SETTINGS):
    return reach_and_length(bridge, settings).length


def basic_length(basic, settings=DEFAULT_SETTINGS):
    return basic_reach(basic, settings).max(height(basic, settings))


# ---------------------------------------------------------------- target sets

def _commutative_target(basic, a_vals, level, t_star, side="a"):
    w, p, q = basic.selection()
    if side == "b":
        p, q = q, p
    tgt = basic.codomain if side == "a" else basic.domain
    metric = tgt.metric
    m = metric.size
    live = np.flatnonzero(w > 0)
    rows, rhs = [], []
    a_rows, b_vec = tgt.lip.lp_rows()
    if len(a_rows):
        rows += [np.hstack([a_rows, np.zeros((len(a_rows), 1))]), np.hstack([-a_rows, np.zeros((len(a_rows), 1))])]
        rhs += [level * b_vec, level * b_vec]
    slack = t_star * (1 + 1e-9) + 1e-12
    for z in live:
        r = np.zeros(m + 1)
        r[q[z]] = 1.0
        rows += [r[None], -r[None]]
        rhs += [np.array([a_vals[p[z]] + slack / w[z]]), np.array([-a_vals[p[z]] + slack / w[z]])]
    eye = np.hstack([np.eye(m), -np.ones((m, 1))])
    rows += [eye, np.hstack([-np.eye(m), -np.ones((m, 1))])]
    rhs += [np.zeros(m), np.zeros(m)]
    c = np.zeros(m + 1)
    c[m] = 1.0
    res = linprog(c, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=[(None, None)] * (m + 1), method="highs")
    if res.status != 0:
        raise SolverFailure(f"target LP failed: {res.message}")
    return res.x[:m]


def _nc_target(basic, avec, level, side="a"):
    key = ("tprob", side)
    if key not in basic._cache:
        tgt = basic.codomain if side == "a" else basic.domain
        emb_t = basic.embed_b if side == "a" else basic.embed_a
        x = basic.pivot_vec if side == "a" else basic.pivot.adj.vec
        D = basic.ambient
        herm = tgt.algebra.hermitian_basis()
        c = cp.Variable(len(herm))
        P = cp.Parameter(D.dim, complex=True)
        lvl = cp.Parameter(nonneg=True)
        cap = cp.Parameter(nonneg=True)
        imgs = batch_product(D, x[None, :], emb_t.apply(herm))
        expr_vec = P - imgs.T @ c
        norms = []
        for o, d in zip(D.offsets, D.block_dims):
            blk = cp.reshape(expr_vec[o:o + d * d], (d, d), order="C")
            norms.append(cp.sigma_max(blk) if d > 1 else cp.abs(expr_vec[o]))
        t = cp.Variable()
        lip = tgt.lip.constraints(c, herm, lvl)
        first = cp.Problem(cp.Minimize(t), [n <= t for n in norms] + lip)
        bvec = herm.T @ c
        bnorm = []
        for o, d in zip(tgt.algebra.offsets, tgt.algebra.block_dims):
            blk = cp.reshape(bvec[o:o + d * d], (d, d), order="C")
            bnorm.append(cp.sigma_max(blk) if d > 1 else cp.abs(bvec[o]))
        s = cp.Variable()
        second = cp.Problem(cp.Minimize(s), [n <= s for n in bnorm] + [n <= cap for n in norms] + lip)
        basic._cache[key] = (first, second, P, lvl, cap, c, herm)
    first, second, P, lvl, cap, c, herm = basic._cache[key]
    D = basic.ambient
    emb_s = basic.embed_a if side == "a" else basic.embed_b
    x = basic.pivot_vec if side == "a" else basic.pivot.adj.vec
    P.value = batch_product(D, emb_s.apply(avec), x)
    lvl.value = level
    best = solve_conic(first, "target SDP")
    coords = c.value.copy()
    cap.value = best * (1 + 1e-6) + 1e-7
    try:
        solve_conic(second, "target tie-break SDP")
        coords = c.value
    except SolverFailure:
        pass
    return coords @ herm


def find_target(bridge, a, level, settings=DEFAULT_SETTINGS, side="a", check=True):
    """Element of the level-l target set of a, minimizing the bridge seminorm then the norm."""
    basic = bridge.basic if isinstance(bridge, ModularBridge) else bridge
    if side == "b":
        basic = basic.reversed()
    src, tgt = basic.domain, basic.codomain
    if not a.is_self_adjoint(1e-9):
        raise ValueError("targets are defined for self-adjoint elements")
    if src.L(a) > level * (1 + 1e-9) + 1e-12:
        raise ValueError(f"level {level} is below L(a) = {src.L(a)}")
    cache = basic._cache.setdefault("targets", {})
    key = (a.vec.tobytes(), float(level))
    if key in cache:
        return cache[key]
    sel = basic.selection()
    if basic.is_identity:
        b = tgt.algebra.from_vec(a.vec.copy())
    elif sel is not None:
        w, p, q = sel
        vals = a.vec.real
        t_star = float(commutative_inner_value(vals, w, p, q, tgt.metric, level)) if level > 0 else None
        if level == 0:
            live = np.flatnonzero(w > 0)
            t_star = float(np.max(w[live] * np.abs(vals[p[live]] - 0.5 * (vals[p[live]].max() + vals[p[live]].min()))))
        g = _commutative_target(basic, vals, level, t_star)
        b = tgt.algebra.from_vec(g.astype(complex))
    else:
        b = tgt.algebra.from_vec(_nc_target(basic, a.vec, level)).re
    if check:
        br = basic_reach(basic, settings)
        lb = tgt.L(b)
        bn = basic.bn(a, b)
        if lb > level * (1 + 1e-7) + 1e-9 or bn > level * br.upper * (1 + 1e-7) + 1e-7:
            raise CertificateFailure(f"target certificate failed: L(b) = {lb}, bn = {bn}, "
                                     f"level * reach = {level * br.upper}")
    cache[key] = b
    return b


def find_modular_target(bridge, omega, level, settings=DEFAULT_SETTINGS):
    """Coanchor paired with the anchor nearest omega / level, rescaled by the level."""
    if bridge.domain.D(omega) > level * (1 + 1e-9) + 1e-12:
        raise ValueError("level must dominate the D-norm")
    if level == 0 or not np.any(omega.data):
        return bridge.codomain.zero()
    anchor, _, j = bridge.anchors.nearest(omega / level)
    pair = anchor if j is None else bridge.coanchors.data[j]
    eta = ModuleElement(bridge.codomain.algebra, level * pair)
    bound = deck_upper(bridge, omega, eta)
    reach = reach_and_length(bridge, settings).reach.upper
    if bound > level * reach * (1 + 1e-9) + 1e-9:
        raise CertificateFailure(f"modular target certificate {bound} exceeds level * reach {level * reach}")
    return eta


def modular_target_certificate(bridge, omega, eta, level, settings=DEFAULT_SETTINGS):
    """Certified upper bound on dn(omega, eta)."""
    if level == 0 or not np.any(omega.data):
        return 0.0
    return deck_upper(bridge, omega, eta)
