"""Run configuration: named spaces, bundles, bridges, treks and propinquity estimates built on demand."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import AdmissibleTriple, FiniteCStarAlgebra, Polynomial
from .bridges import AnchorFamily, BasicBridge, Embedding, ModularBridge, Settings
from .constructions import (Correspondence, FuzzyTorusParams, bridge_join_direct_sum, build_commutative_space,
                            build_fuzzy_torus, correspondence_bridge, finite_anchor_reduction, identity_bridge,
                            lattice_family, lift_bridge_to_free_modules, net_family, perturbed_pivot_bridge)
from .hilbert_module import MetrizedBundle, d_norm_free, d_norm_self, direct_sum_bundle
from .quantum_metric import DEFAULT_NET_CAP, FiniteMetricSpace
from .serialize import decode_array
from .treks import ModularTrek


class ConfigParseError(ValueError):
    pass


class ConfigReferenceError(ValueError):
    pass


SECTIONS = ("spaces", "bundles", "bridges", "treks", "propinquity")


@dataclass
class RunConfig:
    seed: int = 0
    resolutions: dict = field(default_factory=lambda: {"imprint": 0.25, "reach": 0.25, "height": 0.25,
                                                        "anchors": 0.05})
    tolerances: dict = field(default_factory=lambda: {"verify": 1e-8})
    net_cap: int = DEFAULT_NET_CAP
    sample_points: int = 64
    objects: dict = field(default_factory=lambda: {s: {} for s in SECTIONS})
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in list(self.resolutions.items()) + list(self.tolerances.items()):
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigParseError(f"{k} must be a positive number")
        if self.net_cap < 1:
            raise ConfigParseError("net_cap must be positive")

    @property
    def settings(self):
        r = self.resolutions
        return Settings(r.get("imprint", 0.25), r.get("reach", 0.25), r.get("height", 0.25),
                        self.net_cap, self.sample_points, self.seed)

    @classmethod
    def from_dict(cls, obj, seed=None):
        if not isinstance(obj, dict):
            raise ConfigParseError("config must be a JSON object")
        unknown = set(obj) - set(SECTIONS) - {"seed", "resolutions", "tolerances", "net_cap", "sample_points"}
        if unknown:
            raise ConfigParseError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        res = dict(base.resolutions)
        res.update(obj.get("resolutions", {}))
        tol = dict(base.tolerances)
        tol.update(obj.get("tolerances", {}))
        objects = {s: dict(obj.get(s, {})) for s in SECTIONS}
        for s in SECTIONS:
            for name, spec in objects[s].items():
                if not isinstance(spec, dict):
                    raise ConfigParseError(f"{s}.{name} must be an object")
        return cls(int(obj.get("seed", 0) if seed is None else seed), res, tol,
                   int(obj.get("net_cap", DEFAULT_NET_CAP)), int(obj.get("sample_points", 64)), objects, obj)

    @classmethod
    def load(cls, path, seed=None):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, seed)


class Registry:
    """Builds and caches named objects; each name resolves to one object per run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._built = {}
        self._building = set()

    def kind_of(self, name):
        for s in SECTIONS:
            if name in self.config.objects[s]:
                return s
        raise ConfigReferenceError(f"no object named {name!r}")

    def names(self, section):
        return list(self.config.objects[section])

    def get(self, name, section=None):
        sec = section or self.kind_of(name)
        if name not in self.config.objects[sec]:
            raise ConfigReferenceError(f"no {sec[:-1]} named {name!r}")
        key = (sec, name)
        if key in self._built:
            return self._built[key]
        if key in self._building:
            raise ConfigReferenceError(f"circular reference through {name!r}")
        self._building.add(key)
        try:
            obj = getattr(self, "_build_" + sec)(name, self.config.objects[sec][name])
        finally:
            self._building.discard(key)
        self._built[key] = obj
        return obj

    def _field(self, spec, key, where):
        if key not in spec:
            raise ConfigParseError(f"{where} is missing {key!r}")
        return spec[key]

    def _build_spaces(self, name, spec):
        kind = spec.get("kind", "finite_metric")
        triple = _triple(spec.get("triple"))
        if kind == "finite_metric":
            d = np.array(self._field(spec, "distances", name), float)
            return build_commutative_space(FiniteMetricSpace(d, tuple(spec.get("labels", ()))), triple)
        if kind == "fuzzy_torus":
            lengths = spec.get("lengths")
            if lengths is not None:
                lengths = {(int(n), int(m)): float(v) for n, m, v in lengths}
            return build_fuzzy_torus(FuzzyTorusParams(int(self._field(spec, "q", name)), int(spec.get("p", 1)),
                                                      lengths), triple)
        raise ConfigParseError(f"space {name}: unknown kind {kind!r}")

    def _build_bundles(self, name, spec):
        kind = spec.get("d_norm", "self")
        if kind == "direct_sum":
            parts = [self.get(p, "bundles") for p in self._field(spec, "parts", name)]
            if len(parts) != 2:
                raise ConfigParseError(f"bundle {name}: direct sums take two parts")
            bundle = direct_sum_bundle(*parts)
        else:
            space = self.get(self._field(spec, "space", name), "spaces")
            if kind == "self":
                bundle = d_norm_self(space)
            elif kind == "free":
                bundle = d_norm_free(space, int(self._field(spec, "rank", name)))
            else:
                raise ConfigParseError(f"bundle {name}: unknown d_norm {kind!r}")
        if "H" in spec:
            h = Polynomial.from_json(2, spec["H"])
            bundle = MetrizedBundle(bundle.base, bundle.rank, bundle.kind, bundle.triple.with_H(h), bundle.parts)
        return bundle

    def _family(self, bundle, spec, default):
        choice = spec if spec is not None else default
        res = self.config.resolutions.get("anchors", 0.05)
        if isinstance(choice, dict):
            res = float(choice.get("resolution", res))
            choice = choice.get("kind", "net")
        if choice == "zero":
            return AnchorFamily.zero(bundle)
        if choice == "net":
            return net_family(bundle, res, self.config.net_cap)
        if choice == "lattice":
            return lattice_family(bundle, res)
        if isinstance(choice, list):
            return AnchorFamily(bundle, decode_array(choice, 3))
        raise ConfigParseError(f"unknown anchor family {choice!r}")

    def _build_bridges(self, name, spec):
        kind = self._field(spec, "kind", name)
        label = spec.get("label", name)
        if kind == "identity":
            bundle = self.get(self._field(spec, "bundle", name), "bundles")
            return identity_bridge(bundle, self._family(bundle, spec.get("anchors"), "lattice"), label=label)
        if kind == "correspondence":
            a = self.get(self._field(spec, "domain", name), "bundles")
            b = self.get(self._field(spec, "codomain", name), "bundles")
            corr = Correspondence(np.array(self._field(spec, "relation", name), bool))
            return correspondence_bridge(a, b, corr, self._family(a, spec.get("anchors"), "zero"),
                                         self._family(b, spec.get("coanchors"), "zero"), label)
        if kind == "perturbed_pivot":
            bundle = self.get(self._field(spec, "bundle", name), "bundles")
            gen = decode_array(self._field(spec, "generator", name), 2)
            return perturbed_pivot_bridge(bundle, gen, float(self._field(spec, "epsilon", name)),
                                          self._family(bundle, spec.get("anchors"), "lattice"), label=label)
        if kind == "free_lift":
            base = self.get(self._field(spec, "base", name), "bridges")
            bundles = None
            if "domain" in spec or "codomain" in spec:
                bundles = (self.get(self._field(spec, "domain", name), "bundles"),
                           self.get(self._field(spec, "codomain", name), "bundles"))
            return lift_bridge_to_free_modules(base, int(self._field(spec, "rank", name)),
                                               float(spec.get("resolution", 0.5)), self.config.settings,
                                               self.config.net_cap, bool(spec.get("homogeneous", False)),
                                               label, bundles)
        if kind == "join":
            parts = [self.get(p, "bridges") for p in self._field(spec, "parts", name)]
            if len(parts) != 2:
                raise ConfigParseError(f"bridge {name}: joins take two parts")
            return bridge_join_direct_sum(*parts, cap=self.config.net_cap, label=label)
        if kind == "reduction":
            return finite_anchor_reduction(self.get(self._field(spec, "bridge", name), "bridges"),
                                           float(self._field(spec, "epsilon", name)), self.config.settings,
                                           self.config.net_cap)
        if kind == "reverse":
            return self.get(self._field(spec, "bridge", name), "bridges").reversed()
        if kind == "explicit":
            a = self.get(self._field(spec, "domain", name), "bundles")
            b = self.get(self._field(spec, "codomain", name), "bundles")
            ambient = FiniteCStarAlgebra(tuple(int(d) for d in self._field(spec, "ambient", name)))
            pivot = ambient.from_vec(decode_array(self._field(spec, "pivot", name), 1))
            ea = Embedding(a.algebra, ambient, decode_array(self._field(spec, "embed_a", name), 2))
            eb = Embedding(b.algebra, ambient, decode_array(self._field(spec, "embed_b", name), 2))
            basic = BasicBridge(a.base, b.base, ambient, pivot, ea, eb)
            return ModularBridge(a, b, basic, self._family(a, spec.get("anchors"), "zero"),
                                 self._family(b, spec.get("coanchors"), "zero"), label)
        raise ConfigParseError(f"bridge {name}: unknown kind {kind!r}")

    def _build_treks(self, name, spec):
        bridges = [self.get(b, "bridges") for b in self._field(spec, "bridges", name)]
        return ModularTrek(bridges, spec.get("label", name))

    def _build_propinquity(self, name, spec):
        return {"domain": self.get(self._field(spec, "domain", name), "bundles"),
                "codomain": self.get(self._field(spec, "codomain", name), "bundles"),
                "treks": [self.get(t, "treks") for t in self._field(spec, "treks", name)],
                "rank": spec.get("rank")}


def _triple(spec):
    if spec is None:
        return None
    return AdmissibleTriple(float(spec.get("C", 1.0)), float(spec.get("D", 0.0)),
                            Polynomial.from_json(3, spec["G"]) if "G" in spec else
                            Polynomial(3, {(1, 0, 1): 1.0, (0, 1, 1): 1.0}),
                            Polynomial.from_json(2, spec["H"]) if "H" in spec else Polynomial(2, {(1, 1): 2.0}))
