"""Sampled checks of the target-set inequalities, comparing interval endpoints in the sound direction."""

from __future__ import annotations

import numpy as np

from .algebra import op_norm
from .bridges import (DEFAULT_SETTINGS, deck_upper, find_modular_target, find_target,
                      reach_and_length)
from .hilbert_module import ModuleElement, batch_product, inner_product, modular_mk
from .results import Report
from .treks import basic_trek, propagate_basic, propagate_itinerary, trek_H, trek_length

SLACK = 1e-7
SQRT2 = np.sqrt(2.0)


def sample_ball_element(bundle, radius, rng):
    """Module element with D-norm exactly radius (zero when radius is 0)."""
    alg = bundle.algebra
    data = rng.normal(size=(bundle.rank, alg.dim)) + 1j * rng.normal(size=(bundle.rank, alg.dim))
    if rng.random() < 0.3:
        data += (rng.normal() + 1j * rng.normal()) * alg.unit_vec()[None] * 3
    d = float(bundle.d_values(data))
    return ModuleElement(alg, data * (radius / d) if d > 0 else 0 * data)


def sample_lip_element(space, level, rng):
    """Self-adjoint element with L = level plus a random constant."""
    alg = space.algebra
    a = alg.random_self_adjoint(rng)
    la = space.L(a)
    a = a * (level / la) if la > 0 else a * 0
    return a + alg.scalar(rng.uniform(-1, 1))


def _H(bridge):
    return lambda x, y: max(bridge.domain.triple.H(x, y), bridge.codomain.triple.H(x, y))


class _Tracker:
    def __init__(self, name):
        self.name, self.worst, self.witness, self.trials = name, 0.0, None, 0

    def record(self, lhs, rhs, witness):
        self.trials += 1
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs <= SLACK else np.inf)
        if ratio > self.worst:
            self.worst = ratio
            if lhs > rhs + SLACK:
                self.witness = {"lhs": float(lhs), "rhs": float(rhs), **witness}
        if lhs > rhs + SLACK and self.witness is None:
            self.witness = {"lhs": float(lhs), "rhs": float(rhs), **witness}

    def report(self):
        return Report(self.name, self.witness is None, self.trials, float(self.worst), self.witness)


def check_bridge_target_props(bridge, trials, seed=0, settings=DEFAULT_SETTINGS, levels=(0.5, 1.0, 2.0)):
    """Norm bound, linearity, product, inner-product coherence and diameter for modular and base targets."""
    rng = np.random.default_rng(seed)
    q = reach_and_length(bridge, settings)
    lam = q.length.upper
    A = bridge.domain.base
    H = _H(bridge)
    G = bridge.codomain.triple.G
    norm_t = _Tracker("target_norm_bound")
    lin_t = _Tracker("target_linearity")
    prod_t = _Tracker("target_module_action")
    inner_t = _Tracker("target_inner_product")
    diam_t = _Tracker("target_diameter")
    for trial in range(trials):
        l = float(rng.choice(levels))
        lp = float(rng.choice(levels))
        a = sample_lip_element(A, lp, rng)
        b = find_target(bridge, a, lp, settings)
        norm_t.record(op_norm(b), op_norm(a) + 2 * lp * lam, {"trial": trial, "level": lp})

        w = sample_ball_element(bridge.domain, l * rng.uniform(0.2, 1.0), rng)
        w2 = sample_ball_element(bridge.domain, l * rng.uniform(0.2, 1.0), rng)
        e = find_modular_target(bridge, w, l, settings)
        e2 = find_modular_target(bridge, w2, l, settings)

        t = float(rng.uniform(-2, 2))
        lvl = l + abs(t) * l
        comb_w, comb_e = w + w2 * t, e + e2 * t
        lin_t.record(deck_upper(bridge, comb_w, comb_e), lvl * q.reach.upper, {"trial": trial, "t": t, "level": l})
        lin_t.record(bridge.codomain.D(comb_e), lvl, {"trial": trial, "t": t, "level": l, "check": "D"})

        bw = ModuleElement(A.algebra, batch_product(A.algebra, a.vec[None], w.data))
        be = ModuleElement(bridge.codomain.algebra, batch_product(bridge.codomain.algebra, b.vec[None], e.data))
        m = G(op_norm(a) + 2 * lp * lam, lp, l)
        prod_t.record(deck_upper(bridge, bw, be), m * lam, {"trial": trial, "level": l, "level_a": lp})
        prod_t.record(bridge.codomain.D(be), m, {"trial": trial, "level": l, "level_a": lp, "check": "D"})

        g = inner_product(w, w)
        hl = H(l, l)
        bg = find_target(bridge, g.re, hl, settings)
        drift = op_norm(bg - inner_product(e, e))
        const = 8 * l * SQRT2 + H(2 * l, 2 * l) + 2 * H(l, l) + 2 * SQRT2 * H(2 * l, 1)
        inner_t.record(drift, const * lam, {"trial": trial, "level": l})

        lhs = modular_mk(bridge.codomain, e, e2, seed).lower
        rhs = SQRT2 * (modular_mk(bridge.domain, w, w2, seed).upper + (4 * l + H(2 * l, 1)) * lam)
        diam_t.record(lhs, rhs, {"trial": trial, "level": l})
    return [norm_t.report(), lin_t.report(), prod_t.report(), inner_t.report(), diam_t.report()]


def check_trek_props(trek, trials, seed=0, settings=DEFAULT_SETTINGS, levels=(0.5, 1.0)):
    """Diameter bound and inner-product drift along a trek, with co-propagated base itineraries."""
    rng = np.random.default_rng(seed)
    lam = trek_length(trek, settings).upper
    H = trek_H(trek)
    diam_t = _Tracker("trek_diameter")
    inner_t = _Tracker("trek_inner_product")
    for trial in range(trials):
        l = float(rng.choice(levels))
        w = sample_ball_element(trek.domain, l * rng.uniform(0.2, 1.0), rng)
        w2 = sample_ball_element(trek.domain, l * rng.uniform(0.2, 1.0), rng)
        it = propagate_itinerary(trek, w, l, settings)
        it2 = propagate_itinerary(trek, w2, l, settings)
        lhs = modular_mk(trek.codomain, it.end, it2.end, seed).lower
        rhs = SQRT2 * (modular_mk(trek.domain, w, w2, seed).upper + (4 * l + H(2 * l, 1)) * lam)
        diam_t.record(lhs, rhs, {"trial": trial, "level": l})
        base = propagate_basic(basic_trek(trek), inner_product(w, w).re, H(l, l), settings)
        drift = op_norm(base.end - inner_product(it.end, it.end))
        const = 8 * l * SQRT2 + H(2 * l, 2 * l) + 6 * H(l, l) + 2 * SQRT2 * H(2 * l, 1)
        inner_t.record(drift, const * lam, {"trial": trial, "level": l})
    return [diam_t.report(), inner_t.report()]
