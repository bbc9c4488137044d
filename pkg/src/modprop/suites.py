"""Named verification suites: each returns a list of Reports, one per checked property."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .algebra import AdmissibleTriple, FiniteCStarAlgebra, State, involution_parts, matrix_algebra, op_norm
from .bridges import DEFAULT_SETTINGS, basic_length, bridge_length, generic_commutative_height, height
from .constructions import (FuzzyTorusParams, bridge_join_direct_sum, build_commutative_space, build_fuzzy_torus,
                            identity_bridge, lift_bridge_to_free_modules, q_envelope)
from .hilbert_module import d_norm_free, d_norm_self, verify_bundle_axioms
from .instances import random_base_bridges, random_iso_pivotal_pair
from .properties import check_bridge_target_props, check_trek_props
from .quantum_metric import FiniteMetricSpace, mk_distance, verify_quasi_leibniz
from .results import Report
from .treks import ModularTrek, compose_treks, propinquity_upper, reverse_trek, trek_length

SUITES = ("algebra", "quantum_metric", "bundle", "bridge", "trek", "free_module_lift", "direct_sum")
SQRT2 = np.sqrt(2.0)


def transport_plan_distance(distances, mu, nu):
    """Earth mover distance by the primal coupling LP."""
    n = len(mu)
    cost = np.asarray(distances, float).ravel()
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1
        rows[n + i, i::n] = 1
    res = linprog(cost, A_eq=rows, b_eq=np.concatenate([mu, nu]), bounds=(0, None), method="highs")
    return float(res.fun)


def norm_lemma_report(count, seed, constant=SQRT2, name="norm_lemma"):
    """||a|| <= constant * max(||Re a||, ||Im a||) on random elements.

    The sqrt2 form holds for normal elements only; constant 2 is the triangle bound.
    """
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for t in range(count):
        dims = tuple(int(d) for d in rng.integers(1, 4, size=rng.integers(1, 4)))
        a = FiniteCStarAlgebra(dims).random_element(rng, rng.uniform(0.1, 5))
        _, re, im = involution_parts(a)
        lhs, rhs = op_norm(a), constant * max(op_norm(re), op_norm(im))
        ratio = lhs / rhs if rhs > 0 else 0.0
        worst = max(worst, ratio)
        if lhs > rhs + 1e-9 and witness is None:
            witness = {"trial": t, "dims": dims, "lhs": lhs, "rhs": rhs, "element": list(a.blocks)}
    return Report(name, witness is None, count, worst, witness)


def algebra_suite(registry, trials, seed):
    out = [norm_lemma_report(trials, seed), norm_lemma_report(trials, seed, 2.0, "norm_triangle_bound")]
    triples = {"leibniz": AdmissibleTriple.leibniz(), "module_derived": AdmissibleTriple.module_derived()}
    if registry is not None:
        for name in registry.names("spaces"):
            triples[name] = registry.get(name, "spaces").triple
    for name, t in triples.items():
        fails = t.check()
        out.append(Report(f"admissible_triple[{name}]", not fails, 1, 0.0, {"failures": fails[:5]} if fails else None))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        a = matrix_algebra(int(rng.integers(1, 4))).random_element(rng, rng.uniform(0.1, 5))
        worst = max(worst, abs(op_norm(a.adj * a) - op_norm(a) ** 2) / max(1.0, op_norm(a) ** 2))
    out.append(Report("c_star_identity", worst <= 1e-9, trials, worst, None if worst <= 1e-9 else {"gap": worst}))
    return out


def _default_spaces():
    rng = np.random.default_rng(7)
    spaces = {f"metric-{k}": build_commutative_space(FiniteMetricSpace.random(rng, k)) for k in (2, 3, 4)}
    spaces["path-3"] = build_commutative_space(FiniteMetricSpace(np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0.]])))
    spaces["fuzzy-torus-2"] = build_fuzzy_torus(FuzzyTorusParams(2))
    return spaces


def _spaces(registry):
    if registry is not None and registry.names("spaces"):
        return {n: registry.get(n, "spaces") for n in registry.names("spaces")}
    return _default_spaces()


def quantum_metric_suite(registry, trials, seed):
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for t in range(trials):
        metric = FiniteMetricSpace.random(rng, int(rng.integers(2, 7)))
        space = build_commutative_space(metric)
        mu, nu = rng.dirichlet(np.ones(metric.size)), rng.dirichlet(np.ones(metric.size))
        alg = space.algebra
        iv = mk_distance(space, State.from_weights(alg, mu), State.from_weights(alg, nu))
        ref = transport_plan_distance(metric.distances, mu, nu)
        err = max(abs(iv.lower - ref), abs(iv.upper - ref))
        worst = max(worst, err)
        if (err > 1e-6 or not iv.contains(ref, 1e-9)) and witness is None:
            witness = {"trial": t, "lower": iv.lower, "upper": iv.upper, "oracle": ref}
    out = [Report("mk_transport_duality", witness is None, trials, worst, witness)]
    for name, space in _spaces(registry).items():
        r = verify_quasi_leibniz(space, trials, seed)
        r.name = f"quasi_leibniz[{name}]"
        out.append(r)
    return out


def _bundles(registry):
    if registry is not None and registry.names("bundles"):
        return {n: registry.get(n, "bundles") for n in registry.names("bundles")}
    out = {}
    for name, space in _default_spaces().items():
        out[f"self[{name}]"] = d_norm_self(space)
        out[f"free2[{name}]"] = d_norm_free(space, 2)
    return out


def bundle_suite(registry, trials, seed):
    out = []
    for name, bundle in _bundles(registry).items():
        r = verify_bundle_axioms(bundle, trials, seed)
        r.name = f"bundle_axioms[{name}]"
        out.append(r)
    return out


def _named(reports, name):
    for r in reports:
        r.name = f"{r.name}[{name}]"
    return reports


def bridge_suite(registry, trials, seed, settings=DEFAULT_SETTINGS):
    bridges = {}
    if registry is not None:
        bridges = {n: registry.get(n, "bridges") for n in registry.names("bridges")}
    if not bridges:
        bundle = d_norm_self(build_commutative_space(FiniteMetricSpace(np.array([[0, 1.], [1, 0]]))))
        bridges = {"identity": identity_bridge(bundle)}
    out = []
    for name, g in bridges.items():
        out.extend(_named(check_bridge_target_props(g, trials, seed, settings), name))
        ln, rv = bridge_length(g, settings), bridge_length(g.reversed(), settings)
        gap = max(abs(ln.lower - rv.lower), abs(ln.upper - rv.upper))
        out.append(Report(f"reverse_symmetry[{name}]", gap <= 1e-12, 1, gap,
                          None if gap <= 1e-12 else {"length": ln.to_json(), "reversed": rv.to_json()}))
        if g.basic.ambient.is_commutative and g.domain.base.is_commutative and g.codomain.base.is_commutative:
            h, ref = height(g, settings), generic_commutative_height(g.basic)
            ok = h.contains(ref, 1e-6)
            out.append(Report(f"height_formula[{name}]", ok, 1, abs(h.mid - ref),
                              None if ok else {"height": h.to_json(), "generic": ref}))
    return out


def trek_suite(registry, trials, seed, settings=DEFAULT_SETTINGS):
    treks = {}
    if registry is not None:
        treks = {n: registry.get(n, "treks") for n in registry.names("treks")}
    if not treks:
        bundle = d_norm_self(build_commutative_space(FiniteMetricSpace(np.array([[0, 1.], [1, 0]]))))
        g = identity_bridge(bundle)
        treks = {"identity-loop": ModularTrek([g, g], "identity-loop")}
    out = []
    for name, t in treks.items():
        out.extend(_named(check_trek_props(t, trials, seed, settings), name))
        ln = trek_length(t, settings)
        rv = trek_length(reverse_trek(t), settings)
        lb = trek_length(compose_treks(t, reverse_trek(t)), settings)
        exact = lb.exact == tuple(a + b for a, b in zip(ln.exact, rv.exact))
        out.append(Report(f"trek_additivity[{name}]", exact, 1, 0.0,
                          None if exact else {"composed": lb.to_json(), "parts": [ln.to_json(), rv.to_json()]}))
    if registry is not None:
        for name in registry.names("propinquity"):
            spec = registry.get(name, "propinquity")
            best = propinquity_upper(spec["domain"], spec["codomain"], spec["treks"], settings)
            out.append(Report(f"propinquity_upper[{name}]", True, len(spec["treks"]), best.upper,
                              None, {"bound": best.to_json()}))
    return out


def _base_triple(base):
    a, b = base.basic.domain.triple, base.basic.codomain.triple
    return a if a == b else a.join(b)


def lift_check(base, n, resolution, settings=DEFAULT_SETTINGS, cap=None):
    """Lifted bridge and the two-sided check of its length against the lifting bound."""
    kwargs = {} if cap is None else {"cap": cap}
    lifted = lift_bridge_to_free_modules(base, n, resolution, settings, **kwargs)
    lam = basic_length(base.basic, settings)
    ln = bridge_length(lifted, settings)
    bound = lifted.lift_info["bound"]
    slack = 2 * resolution
    lower_ok = lam.lower - slack <= ln.upper
    upper_ok = ln.upper <= bound + slack
    q = q_envelope(lam.upper, n, _base_triple(base))
    return lifted, {"lambda": lam.to_json(), "length": ln.to_json(), "bound": bound, "slack": slack,
                    "q_envelope": q, "lower_ok": bool(lower_ok), "upper_ok": bool(upper_ok)}


def free_module_lift_suite(registry, trials, seed, settings=DEFAULT_SETTINGS, ranks=(1, 2), resolutions=None):
    resolutions = resolutions or {1: 0.5, 2: 1.0, 3: 2.5}
    bases = {}
    if registry is not None:
        bases = {n: registry.get(n, "bridges") for n in registry.names("bridges")
                 if registry.config.objects["bridges"][n].get("kind") == "correspondence"}
    if not bases:
        bases = {inst.label: inst.bridge for inst in random_base_bridges(trials, seed)}
    out = []
    for name, base in bases.items():
        for n in ranks:
            _, info = lift_check(base, n, resolutions[n], settings)
            ok = info["lower_ok"] and info["upper_ok"]
            ratio = info["length"]["upper"] / (info["bound"] + info["slack"])
            out.append(Report(f"lift_bound[{name},n={n}]", ok, 1, ratio, None if ok else info, info))
    return out


def direct_sum_suite(registry, trials, seed, settings=DEFAULT_SETTINGS, resolution=1.0):
    pairs = []
    if registry is not None:
        for name in registry.names("bridges"):
            spec = registry.config.objects["bridges"][name]
            if spec.get("kind") == "join":
                pairs.append((name, *[registry.get(p, "bridges") for p in spec["parts"]]))
    if not pairs:
        pairs = [(f"pair-{seed * 1000 + i}", *random_iso_pivotal_pair(seed * 1000 + i, resolution, settings))
                 for i in range(trials)]
    out = []
    for name, g1, g2 in pairs:
        joined = bridge_join_direct_sum(g1, g2)
        l1, l2, lj = (bridge_length(g, settings) for g in (g1, g2, joined))
        h1, hj = height(g1, settings), height(joined, settings)
        sub = lj.upper <= l1.upper + l2.upper
        info = {"join": lj.to_json(), "parts": [l1.to_json(), l2.to_json()]}
        out.append(Report(f"join_subadditive[{name}]", sub, 1, lj.upper / max(l1.upper + l2.upper, 1e-300),
                          None if sub else info, info))
        same = hj.lower == h1.lower and hj.upper == h1.upper
        out.append(Report(f"join_height[{name}]", same, 1, abs(hj.upper - h1.upper),
                          None if same else {"join": hj.to_json(), "part": h1.to_json()}))
    return out


def run_suite(name, registry, trials, seed, settings=DEFAULT_SETTINGS):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    fn = {"algebra": algebra_suite, "quantum_metric": quantum_metric_suite, "bundle": bundle_suite}.get(name)
    if fn is not None:
        return fn(registry, trials, seed)
    return {"bridge": bridge_suite, "trek": trek_suite, "free_module_lift": free_module_lift_suite,
            "direct_sum": direct_sum_suite}[name](registry, trials, seed, settings)
