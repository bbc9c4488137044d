"""Seeded random instances: small commutative base bridges and iso-pivotal bridge pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridges import DEFAULT_SETTINGS, ModularBridge
from .constructions import Correspondence, build_commutative_space, correspondence_bridge, lift_bridge_to_free_modules
from .hilbert_module import d_norm_self
from .quantum_metric import DEFAULT_NET_CAP, FiniteMetricSpace


@dataclass
class BaseInstance:
    seed: int
    bridge: ModularBridge
    distances: tuple
    relation: np.ndarray

    @property
    def label(self):
        return self.bridge.label


def _metric(rng, n):
    if n == 1:
        return FiniteMetricSpace(np.zeros((1, 1)))
    d = float(np.round(rng.uniform(0.5, 1.5), 3))
    return FiniteMetricSpace(np.array([[0.0, d], [d, 0.0]]))


def _relation(rng, nx, ny):
    while True:
        r = rng.random((nx, ny)) < 0.6
        if r.any(axis=1).all() and r.any(axis=0).all():
            return r


def random_base_bridge(seed):
    """Correspondence bridge from a 2-point space to a 1- or 2-point space with a random covering relation."""
    rng = np.random.default_rng(seed)
    mx, my = _metric(rng, 2), _metric(rng, int(rng.integers(1, 3)))
    rel = _relation(rng, mx.size, my.size)
    x, y = build_commutative_space(mx), build_commutative_space(my)
    g = correspondence_bridge(d_norm_self(x), d_norm_self(y), Correspondence(rel), label=f"base-{seed}")
    dists = (float(mx.distances[0, 1]), float(my.distances[0, -1]))
    return BaseInstance(seed, g, dists, rel)


def random_base_bridges(count, seed=0):
    return [random_base_bridge(seed * 1000 + i) for i in range(count)]


def random_iso_pivotal_pair(seed, resolution=1.0, settings=DEFAULT_SETTINGS, cap=DEFAULT_NET_CAP):
    """Two rank-1 lifts of one base bridge, at different anchor scalings, sharing the basic bridge."""
    base = random_base_bridge(seed).bridge
    g1 = lift_bridge_to_free_modules(base, 1, resolution, settings, cap, homogeneous=False, label=f"lift-{seed}-a")
    g2 = lift_bridge_to_free_modules(base, 1, resolution, settings, cap, homogeneous=True, label=f"lift-{seed}-b")
    return g1, g2
