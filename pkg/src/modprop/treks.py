"""Modular treks: composition, reversal, length, basic treks, itineraries and propinquity upper bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import inf, nextafter

import numpy as np

from .algebra import StructureError
from .bridges import (DEFAULT_SETTINGS, BasicBridge, ModularBridge, basic_length, bridge_length,
                      find_modular_target, find_target, modular_target_certificate)
from .hilbert_module import ModuleElement, inner_product
from .results import CertificateFailure, CertifiedInterval


def _round_down(q: Fraction):
    f = float(q)
    return nextafter(f, -inf) if Fraction(f) > q else f


def _round_up(q: Fraction):
    f = float(q)
    return nextafter(f, inf) if Fraction(f) < q else f


@dataclass(frozen=True)
class TrekLength(CertifiedInterval):
    """Interval whose endpoints are exact rational sums, rounded outward to floats."""

    exact: tuple = field(default=(Fraction(0), Fraction(0), Fraction(0)), compare=False)

    @classmethod
    def from_exact(cls, lo: Fraction, hi: Fraction, res: Fraction):
        return cls(_round_down(lo), _round_up(hi), _round_up(res), (lo, hi, res))

    @classmethod
    def of(cls, iv: CertifiedInterval):
        return cls.from_exact(Fraction(iv.lower), Fraction(iv.upper), Fraction(iv.resolution))

    def __add__(self, other):
        if not isinstance(other, TrekLength):
            other = TrekLength.of(other if isinstance(other, CertifiedInterval) else CertifiedInterval.exact(other))
        return TrekLength.from_exact(*(a + b for a, b in zip(self.exact, other.exact)))

    __radd__ = __add__


class ModularTrek:
    def __init__(self, bridges, label=""):
        bridges = list(bridges)
        if not bridges:
            raise StructureError("a trek needs at least one bridge")
        for j, (g, h) in enumerate(zip(bridges, bridges[1:])):
            if g.codomain is not h.domain:
                raise StructureError(f"bridge {j} ends where bridge {j + 1} does not start")
        self.bridges = tuple(bridges)
        self.label = label

    @property
    def domain(self):
        return self.bridges[0].domain

    @property
    def codomain(self):
        return self.bridges[-1].codomain

    def __len__(self):
        return len(self.bridges)

    def same_as(self, other):
        return len(self) == len(other) and all(a is b for a, b in zip(self.bridges, other.bridges))


def trek_length(trek: ModularTrek, settings=DEFAULT_SETTINGS):
    total = TrekLength.of(CertifiedInterval.exact(0.0))
    for g in trek.bridges:
        total = total + TrekLength.of(bridge_length(g, settings))
    return total


def compose_treks(first: ModularTrek, second: ModularTrek):
    if first.codomain is not second.domain:
        raise StructureError("treks do not meet: codomain of the first is not the domain of the second")
    return ModularTrek(first.bridges + second.bridges, f"{first.label}*{second.label}".strip("*"))


def reverse_trek(trek: ModularTrek):
    out = ModularTrek([g.reversed() for g in reversed(trek.bridges)], trek.label)
    return out


def basic_trek(trek: ModularTrek):
    return [g.basic for g in trek.bridges]


def basic_trek_length(bridges, settings=DEFAULT_SETTINGS):
    total = TrekLength.of(CertifiedInterval.exact(0.0))
    for b in bridges:
        total = total + TrekLength.of(basic_length(b, settings))
    return total


def reduce_trek(trek: ModularTrek):
    """Cut loops: whenever a bundle reappears, drop the bridges travelled in between."""
    out = []
    seen = [trek.domain]
    for g in trek.bridges:
        out.append(g)
        seen.append(g.codomain)
        for i, bundle in enumerate(seen[:-1]):
            if bundle is g.codomain:
                del out[i:]
                del seen[i + 1:]
                break
    if not out:
        return None
    return ModularTrek(out, trek.label)


@dataclass
class Itinerary:
    level: float
    waypoints: list
    certificates: list

    @property
    def end(self):
        return self.waypoints[-1]


def propagate_itinerary(trek: ModularTrek, omega: ModuleElement, level, settings=DEFAULT_SETTINGS):
    if trek.domain.D(omega) > level * (1 + 1e-9) + 1e-12:
        raise ValueError("level must dominate the D-norm of the starting element")
    points, certs = [omega], []
    for j, g in enumerate(trek.bridges):
        try:
            eta = find_modular_target(g, points[-1], level, settings)
        except CertificateFailure as exc:
            raise CertificateFailure(f"step {j}: {exc}", step=j) from exc
        certs.append(modular_target_certificate(g, points[-1], eta, level, settings))
        points.append(eta)
    return Itinerary(level, points, certs)


def propagate_basic(trek, a, level, settings=DEFAULT_SETTINGS):
    """Itinerary of self-adjoint elements along the basic trek, via find_target at a fixed level."""
    bridges = basic_trek(trek) if isinstance(trek, ModularTrek) else list(trek)
    points, certs = [a], []
    for j, b in enumerate(bridges):
        try:
            nxt = find_target(b, points[-1], level, settings)
        except CertificateFailure as exc:
            raise CertificateFailure(f"step {j}: {exc}", step=j) from exc
        certs.append(b.bn(points[-1], nxt))
        points.append(nxt)
    return Itinerary(level, points, certs)


@dataclass
class PropinquityBound:
    length: CertifiedInterval
    index: int
    label: str

    @property
    def upper(self):
        return self.length.upper

    def to_json(self):
        return {"length": self.length.to_json(), "index": self.index, "label": self.label}


def propinquity_upper(domain, codomain, treks, settings=DEFAULT_SETTINGS):
    """Upper estimate of the propinquity: the supplied trek of least upper length."""
    treks = list(treks)
    if not treks:
        raise ValueError("at least one trek is required")
    best = None
    for i, t in enumerate(treks):
        if t.domain is not domain or t.codomain is not codomain:
            raise StructureError(f"trek {i} does not run between the requested bundles")
        ln = trek_length(t, settings)
        if best is None or ln.upper < best.length.upper:
            best = PropinquityBound(ln, i, t.label)
    return best


def itinerary_inner_drift(itinerary: Itinerary, basic_itinerary: Itinerary):
    """|| b_end - <eta_end, eta_end> || for co-propagated module and base itineraries."""
    eta = itinerary.end
    return float((basic_itinerary.end - inner_product(eta, eta)).norm())


def trek_H(trek: ModularTrek):
    bundles = [trek.domain] + [g.codomain for g in trek.bridges]
    return lambda x, y: max(b.triple.H(x, y) for b in bundles)
