"""Lipschitz seminorms, quantum compact metric spaces, Monge-Kantorovich distances and ball nets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .algebra import (AdmissibleTriple, FiniteCStarAlgebra, State, batch_adjoint, batch_op_norm,
                      batch_product, commutative_algebra, jordan_lie, op_norm)
from .results import CertifiedInterval, NetCapExceeded, Report, SolverFailure

LP_SLACK = 1e-9
SDP_SLACK = 1e-7
DEFAULT_NET_CAP = 200_000


def solve_conic(prob, what="conic program"):
    """Solve with CLARABEL, falling back to CVXOPT; returns the optimal value."""
    for solver in (cp.CLARABEL, cp.CVXOPT):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver)
        except cp.error.SolverError:
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and prob.value is not None:
            return float(prob.value)
    raise SolverFailure(f"{what} ended with status {prob.status}")


class InvalidSeminorm(ValueError):
    pass


@dataclass(frozen=True)
class FiniteMetricSpace:
    distances: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        d = np.array(self.distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ValueError("distance matrix must be square and nonempty")
        n = d.shape[0]
        if not np.allclose(d, d.T, atol=0, rtol=0) or np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        off = d[~np.eye(n, dtype=bool)]
        if off.size and off.min() <= 0:
            raise ValueError("distinct points need positive distance")
        for k in range(n):
            if np.any(d > d[:, [k]] + d[[k], :] + 1e-12):
                raise ValueError("triangle inequality violated")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(n))
        if len(labels) != n:
            raise ValueError("one label per point")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self):
        return self.distances.shape[0]

    @property
    def diameter(self):
        return float(self.distances.max())

    @property
    def min_distance(self):
        n = self.size
        return float(self.distances[~np.eye(n, dtype=bool)].min()) if n > 1 else np.inf

    def to_json(self):
        return {"distances": self.distances.tolist(), "labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["distances"], float), tuple(obj.get("labels", ())))

    @classmethod
    def random(cls, rng, n, low=0.5, high=3.0):
        """Shortest-path closure of random positive weights."""
        w = rng.uniform(low, high, size=(n, n))
        w = np.minimum(w, w.T)
        np.fill_diagonal(w, 0.0)
        for k in range(n):
            w = np.minimum(w, w[:, [k]] + w[[k], :])
        return cls(w)


def _realify(m):
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


class Seminorm:
    """Seminorm oracle on flattened algebra coordinates; subclasses provide batch values and convex constraints."""

    kind = "abstract"
    self_adjoint_only = True

    def __init__(self, algebra):
        self.algebra = algebra

    def values(self, vecs):
        raise NotImplementedError

    def __call__(self, a):
        return float(self.values(a.vec))

    def in_domain(self, a):
        return (not self.self_adjoint_only) or a.is_self_adjoint(1e-9)

    def difference_maps(self):
        """Complex matrices whose common kernel is the null space."""
        raise NotImplementedError

    def constraints(self, coords, basis, level):
        """cvxpy constraints saying seminorm(coords @ basis) <= level for a real coordinate variable."""
        raise NotImplementedError

    def null_space_dim(self):
        """Real dimension of the null space inside the self-adjoint part."""
        herm = self.algebra.hermitian_basis()
        rows = [m @ herm.T for m in self.difference_maps()]
        stacked = np.vstack([np.vstack([r.real, r.imag]) for r in rows]) if rows else np.zeros((0, len(herm)))
        if stacked.size == 0:
            return len(herm)
        s = np.linalg.svd(stacked, compute_uv=False)
        tol = 1e-9 * max(1.0, s.max(initial=0.0))
        return len(herm) - int(np.sum(s > tol))


class LipschitzSeminorm(Seminorm):
    kind = "lipschitz-from-metric"

    def __init__(self, metric: FiniteMetricSpace, algebra=None):
        super().__init__(algebra or commutative_algebra(metric.size))
        self.metric = metric
        pairs = list(combinations(range(metric.size), 2))
        self.pairs = np.array(pairs, dtype=int).reshape(-1, 2)
        self.pair_dist = np.array([metric.distances[i, j] for i, j in pairs])

    def values(self, vecs):
        vecs = np.asarray(vecs)
        if len(self.pairs) == 0:
            return np.zeros(vecs.shape[:-1])
        diff = np.abs(vecs[..., self.pairs[:, 0]] - vecs[..., self.pairs[:, 1]])
        return np.max(diff / self.pair_dist, axis=-1)

    def difference_maps(self):
        m = np.zeros((len(self.pairs), self.algebra.dim), complex)
        m[np.arange(len(self.pairs)), self.pairs[:, 0]] = 1.0
        m[np.arange(len(self.pairs)), self.pairs[:, 1]] = -1.0
        return [m]

    def lp_rows(self):
        """(A, b) with |A f| <= level * b encoding L(f) <= level."""
        return self.difference_maps()[0].real, self.pair_dist

    def constraints(self, coords, basis, level):
        if len(self.pairs) == 0:
            return []
        a, b = self.lp_rows()
        m = (a @ basis.T).real
        return [cp.abs(m @ coords) <= level * b]


class GroupActionSeminorm(Seminorm):
    kind = "group-action-difference"

    def __init__(self, algebra, unitaries, lengths):
        super().__init__(algebra)
        if len(unitaries) != len(lengths) or not unitaries:
            raise InvalidSeminorm("one length per nontrivial group element required")
        us = []
        for u, ell in zip(unitaries, lengths):
            u = [np.asarray(b, complex) for b in u]
            for b in u:
                if not np.allclose(b @ b.conj().T, np.eye(len(b)), atol=1e-9):
                    raise InvalidSeminorm("group element is not unitary")
            if ell <= 0:
                raise InvalidSeminorm("lengths must be positive")
            us.append(algebra.join(u))
        self.unitary_vecs = np.array(us)
        self.lengths = np.asarray(lengths, float)
        self._lmi_cache = {}

    def values(self, vecs):
        vecs = np.asarray(vecs)
        flat = vecs.reshape(-1, self.algebra.dim)
        out = np.zeros(flat.shape[0])
        for u, ell in zip(self.unitary_vecs, self.lengths):
            moved = batch_product(self.algebra, batch_product(self.algebra, u, flat), batch_adjoint(self.algebra, u))
            out = np.maximum(out, batch_op_norm(self.algebra, moved - flat) / ell)
        return out.reshape(vecs.shape[:-1])

    def difference_maps(self):
        alg = self.algebra
        eye = np.eye(alg.dim, dtype=complex)
        maps = []
        for u in self.unitary_vecs:
            cols = batch_product(alg, batch_product(alg, u, eye), batch_adjoint(alg, u)) - eye
            maps.append(cols.T)
        return maps

    def _lmis(self, basis):
        key = basis.tobytes()
        if key not in self._lmi_cache:
            alg = self.algebra
            terms = []
            for u, ell in zip(self.unitary_vecs, self.lengths):
                moved = batch_product(alg, batch_product(alg, u, basis), batch_adjoint(alg, u)) - basis
                per_block = [alg.split(m) for m in moved]
                for k in range(len(alg.block_dims)):
                    mats = np.array([_realify(pb[k]) for pb in per_block])
                    mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
                    terms.append((mats, ell))
            self._lmi_cache[key] = terms
        return self._lmi_cache[key]

    def constraints(self, coords, basis, level):
        out = []
        for mats, ell in self._lmis(basis):
            m = mats.shape[1]
            expr = sum(coords[i] * mats[i] for i in range(len(mats)))
            out += [expr << ell * level * np.eye(m), expr >> -ell * level * np.eye(m)]
        return out


class ExplicitLinearSeminorm(Seminorm):
    """L(a) = max_j |T_j . vec(a)| for an explicit complex matrix T."""

    kind = "explicit-linear-map"

    def __init__(self, algebra, matrix):
        super().__init__(algebra)
        self.matrix = np.atleast_2d(np.asarray(matrix, complex))
        if self.matrix.shape[1] != algebra.dim:
            raise InvalidSeminorm("explicit map has wrong number of columns")

    def values(self, vecs):
        return np.max(np.abs(np.asarray(vecs) @ self.matrix.T), axis=-1)

    def difference_maps(self):
        return [self.matrix]

    def constraints(self, coords, basis, level):
        return [cp.abs((self.matrix @ basis.T) @ coords) <= level]


class MaxSeminorm(Seminorm):
    kind = "max-combination"

    def __init__(self, parts):
        super().__init__(parts[0].algebra)
        self.parts = list(parts)

    def values(self, vecs):
        return np.max([p.values(vecs) for p in self.parts], axis=0)

    def difference_maps(self):
        return [m for p in self.parts for m in p.difference_maps()]

    def constraints(self, coords, basis, level):
        return [c for p in self.parts for c in p.constraints(coords, basis, level)]


class ExtendedSeminorm(Seminorm):
    """M(a) = max(L(Re a), L(Im a)) on the whole algebra."""

    kind = "extended-to-full"
    self_adjoint_only = False

    def __init__(self, lip):
        super().__init__(lip.algebra)
        self.lip = lip

    def values(self, vecs):
        vecs = np.asarray(vecs)
        adj = batch_adjoint(self.algebra, vecs)
        return np.maximum(self.lip.values((vecs + adj) / 2), self.lip.values((vecs - adj) / 2j))

    def difference_maps(self):
        return self.lip.difference_maps()


def extend_seminorm(lip):
    return ExtendedSeminorm(lip)


@dataclass
class QuantumMetricSpace:
    algebra: FiniteCStarAlgebra
    lip: Seminorm
    triple: AdmissibleTriple
    diameter_bound: float
    quotient_radius: float
    kind: str = "finite_metric"
    metric: FiniteMetricSpace | None = None
    payload: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def is_commutative(self):
        return self.metric is not None

    def L(self, a):
        return self.lip(a)

    def quotient_basis(self):
        """Orthonormal real coordinates for self-adjoint elements modulo the unit."""
        if "qbasis" not in self._cache:
            herm = self.algebra.hermitian_basis()
            unit = self.algebra.unit_vec()
            u = (herm @ unit.conj()).real
            u /= np.linalg.norm(u)
            proj = np.eye(len(herm)) - np.outer(u, u)
            w, v = np.linalg.eigh(proj)
            coords = v[:, w > 0.5].T
            self._cache["qbasis"] = coords @ herm
        return self._cache["qbasis"]

    def coefficient_box(self):
        """Max |c_i| over L <= 1 in quotient coordinates (SDP per coordinate)."""
        if "box" not in self._cache:
            basis = self.quotient_basis()
            c = cp.Variable(len(basis))
            w = cp.Parameter(len(basis))
            prob = cp.Problem(cp.Maximize(w @ c), self.lip.constraints(c, basis, 1.0))
            out = []
            for i in range(len(basis)):
                e = np.zeros(len(basis))
                e[i] = 1.0
                w.value = e
                out.append(solve_conic(prob, "coefficient bound") * (1 + 1e-6) + 1e-8)
            self._cache["box"] = np.array(out)
        return self._cache["box"]

    def to_json(self):
        obj = {"kind": self.kind, "triple": self.triple.to_json(), "diameter_bound": self.diameter_bound}
        if self.metric is not None:
            obj["metric"] = self.metric.to_json()
        obj.update(self.payload)
        return obj


def lip_from_metric(metric: FiniteMetricSpace, triple=None):
    lip = LipschitzSeminorm(metric)
    return QuantumMetricSpace(lip.algebra, lip, triple or AdmissibleTriple.leibniz(),
                              metric.diameter, metric.diameter / 2, "finite_metric", metric)


def _radius_bound(algebra, box, basis):
    norms = batch_op_norm(algebra, basis)
    bound = float(np.sum(box * norms))
    hs = float(np.sqrt(np.sum(box ** 2)))
    if len(algebra.block_dims) == 1:
        q = algebra.block_dims[0]
        hs *= np.sqrt((q - 1) / q)
    return min(bound, hs)


def lip_from_group_action(algebra, unitaries, lengths, triple=None, payload=None):
    lip = GroupActionSeminorm(algebra, unitaries, lengths)
    if lip.null_space_dim() != 1:
        raise InvalidSeminorm("action is reducible: the seminorm vanishes beyond the scalars")
    space = QuantumMetricSpace(algebra, lip, triple or AdmissibleTriple.leibniz(), 0.0, 0.0,
                               "group_action", None, payload or {})
    r = _radius_bound(algebra, space.coefficient_box(), space.quotient_basis())
    space.quotient_radius = r
    space.diameter_bound = 2 * r
    return space


def _commutative_mk_lp(metric, weights):
    n = metric.size
    if n == 1:
        return 0.0, np.zeros(1)
    a, b = LipschitzSeminorm(metric).lp_rows()
    a_ub = np.vstack([a, -a])
    b_ub = np.concatenate([b, b])
    bounds = [(0, 0)] + [(None, None)] * (n - 1)
    res = linprog(-weights, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverFailure(f"transport dual LP failed: {res.message}")
    return -res.fun, res.x


def mk_distance(space: QuantumMetricSpace, phi: State, psi: State):
    """Monge-Kantorovich distance between two states as a certified bracket."""
    if not (phi.algebra.same_as(space.algebra) and psi.algebra.same_as(space.algebra)):
        raise ValueError("states must live on the space's algebra")
    diff = phi.vec - psi.vec
    if np.max(np.abs(diff)) == 0:
        return CertifiedInterval.exact(0.0)
    if space.is_commutative:
        w = diff.real
        value, f = _commutative_mk_lp(space.metric, w)
        lf = space.lip.values(f)
        lower = abs(float(w @ f)) / max(1.0, lf)
        upper = max(lower, value) + LP_SLACK * (1 + abs(value))
        return CertifiedInterval(min(lower, upper), upper, upper - lower)
    return _noncommutative_mk(space, diff)


def _mk_problem(space):
    if "mk" not in space._cache:
        basis = space.quotient_basis()
        c = cp.Variable(len(basis))
        w = cp.Parameter(len(basis))
        prob = cp.Problem(cp.Maximize(w @ c), space.lip.constraints(c, basis, 1.0))
        space._cache["mk"] = (prob, c, w, basis)
    return space._cache["mk"]


def _noncommutative_mk(space, diff):
    prob, c, w, basis = _mk_problem(space)
    w.value = (basis @ diff).real
    solve_conic(prob, "Monge-Kantorovich SDP")
    a = c.value @ basis
    la = float(space.lip.values(a))
    lower = abs(float((a @ diff).real)) / max(1.0, la)
    upper = max(lower, float(prob.value)) * (1 + SDP_SLACK) + SDP_SLACK
    return CertifiedInterval(lower, upper, upper - lower)


@dataclass
class BallNet:
    space: QuantumMetricSpace
    radius: float
    resolution: float
    stride: float
    points: np.ndarray
    modulo_constants: bool = True

    def __len__(self):
        return len(self.points)


def _grid_count_estimate(ranges):
    est = 1.0
    for r in ranges:
        est *= 2 * r + 1
    return est


def ball_net(space: QuantumMetricSpace, radius, resolution, cap=DEFAULT_NET_CAP):
    """Grid net of the L-ball modulo constants whose covering radius in norm is at most `resolution`."""
    if radius < 0 or resolution <= 0:
        raise ValueError("radius must be nonnegative and resolution positive")
    zero = np.zeros((1, space.algebra.dim), complex)
    if radius == 0 or (space.is_commutative and space.metric.size == 1):
        return BallNet(space, radius, resolution, resolution, zero)
    if space.is_commutative:
        return _commutative_ball_net(space, radius, resolution, cap)
    return _matrix_ball_net(space, radius, resolution, cap)


def _commutative_ball_net(space, radius, resolution, cap):
    metric = space.metric
    d = metric.distances
    n = metric.size
    h = 2 * resolution / (1 + metric.diameter / metric.min_distance)
    ranges = [int(np.floor(radius * d[0, k] / h + 1e-9)) for k in range(n)]
    est = _grid_count_estimate(ranges[1:])
    cur = np.zeros((1, 1))
    for k in range(1, n):
        vals = h * np.arange(-ranges[k], ranges[k] + 1)
        cand = np.repeat(cur, len(vals), axis=0)
        new = np.tile(vals, len(cur))[:, None]
        ok = np.ones(len(cand), bool)
        for j in range(k):
            ok &= np.abs(new[:, 0] - cand[:, j]) <= radius * d[j, k] + 1e-9
        cur = np.hstack([cand[ok], new[ok]])
        if len(cur) > cap:
            raise NetCapExceeded(max(est, len(cur)), cap)
    pts = cur.astype(complex)
    return BallNet(space, radius, resolution, h, pts)


def _matrix_ball_net(space, radius, resolution, cap):
    basis = space.quotient_basis()
    box = space.coefficient_box() * radius
    lsum = float(np.sum(space.lip.values(basis)))
    nsum = float(np.sum(batch_op_norm(space.algebra, basis)))
    # shrink by s = h lsum / (2 radius), then round: error s * R1 * radius + h nsum / 2
    h = resolution / (0.5 * lsum * space.quotient_radius + 0.5 * nsum)
    ranges = [int(np.floor(b / h + 1e-9)) for b in box]
    est = _grid_count_estimate(ranges)
    if est > cap:
        raise NetCapExceeded(est, cap)
    axes = [h * np.arange(-r, r + 1) for r in ranges]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(basis))
    vecs = grid @ basis
    keep = space.lip.values(vecs) <= radius + 1e-9
    return BallNet(space, radius, resolution, h, vecs[keep])


def verify_quasi_leibniz(space: QuantumMetricSpace, trials, seed=0, F=None, tol=1e-8):
    """Samples self-adjoint pairs and checks both Jordan and Lie quasi-Leibniz inequalities."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    F = F or space.triple.F
    alg = space.algebra
    worst, witness = 0.0, None
    for t in range(trials):
        a = alg.random_self_adjoint(rng, rng.uniform(0.1, 2)) + alg.scalar(rng.uniform(-3, 3))
        b = a if t % 4 == 0 else alg.random_self_adjoint(rng, rng.uniform(0.1, 2)) + alg.scalar(rng.uniform(-3, 3))
        jor, lie = jordan_lie(a, b)
        lhs = max(space.L(jor), space.L(lie))
        rhs = F(op_norm(a), op_norm(b), space.L(a), space.L(b))
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs <= tol else np.inf)
        if ratio > worst:
            worst = ratio
            witness = {"a": a.vec.tolist(), "b": b.vec.tolist(), "lhs": lhs, "rhs": rhs}
        if lhs > rhs + tol:
            return Report("quasi_leibniz", False, t + 1, worst, _jsonable(witness))
    return Report("quasi_leibniz", True, trials, worst, None)


def _jsonable(w):
    if w is None:
        return None
    out = {}
    for k, v in w.items():
        if isinstance(v, list):
            out[k] = [[float(np.real(z)), float(np.imag(z))] for z in v]
        else:
            out[k] = float(v)
    return out
