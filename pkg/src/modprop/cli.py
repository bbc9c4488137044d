"""Command line: eval quantities of a named object, run verification suites, merge reports into a table."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

from . import __version__
from .algebra import InvalidPivot, StructureError
from .bridges import ModularBridge, reach_and_length
from .config import ConfigParseError, ConfigReferenceError, Registry, RunConfig
from .constructions import q_envelope
from .hilbert_module import MetrizedBundle
from .quantum_metric import InvalidSeminorm, QuantumMetricSpace
from .results import CertificateFailure, NetCapExceeded, SolverFailure
from .serialize import dumps, write_atomic
from .suites import SUITES, run_suite
from .treks import ModularTrek, basic_trek, basic_trek_length, propinquity_upper, trek_length

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _bridge_entry(bridge, settings):
    entry = {"kind": "bridge", "label": bridge.label, "anchors": len(bridge.anchors) if not bridge.anchors.implicit
             else None, "quantities": reach_and_length(bridge, settings).to_json()}
    info = getattr(bridge, "lift_info", None)
    if info is not None:
        entry["lift"] = dict(info)
        entry["bounds"] = [{"name": "lift_bound", "value": reach_and_length(bridge, settings).length.upper,
                            "bound": info["bound"], "slack": 2 * info["resolution"]}]
    return entry


def _lattice_resolution(bridge):
    info = getattr(bridge, "lift_info", None)
    return info["resolution"] if info is not None else 0.0


def _trek_entry(trek, settings):
    ln = trek_length(trek, settings)
    return {"kind": "trek", "label": trek.label, "length": ln.to_json(),
            "basic_length": basic_trek_length(basic_trek(trek), settings).to_json(),
            "bridges": [_bridge_entry(g, settings) for g in trek.bridges]}


def _propinquity_entry(spec, settings):
    best = propinquity_upper(spec["domain"], spec["codomain"], spec["treks"], settings)
    entry = {"kind": "propinquity", "upper": best.to_json(),
             "treks": [_trek_entry(t, settings) for t in spec["treks"]]}
    n = spec.get("rank")
    if n is not None:
        lam = basic_trek_length(basic_trek(spec["treks"][best.index]), settings)
        space = spec["domain"].base
        res = sum(2 * _lattice_resolution(g) for g in spec["treks"][best.index].bridges)
        entry["bounds"] = [{"name": "q_envelope", "value": best.upper,
                            "bound": q_envelope(lam.upper, int(n), space.triple), "slack": res}]
    return entry


def evaluate(registry, target):
    settings = registry.config.settings
    section = registry.kind_of(target)
    obj = registry.get(target, section)
    if isinstance(obj, ModularBridge):
        return _bridge_entry(obj, settings)
    if isinstance(obj, ModularTrek):
        return _trek_entry(obj, settings)
    if isinstance(obj, MetrizedBundle):
        return {"kind": "bundle", "bundle": obj.to_json()}
    if isinstance(obj, QuantumMetricSpace):
        return {"kind": "space", "space": obj.to_json(), "quotient_radius": obj.quotient_radius}
    return _propinquity_entry(obj, settings)


def _config_block(cfg):
    return {"seed": cfg.seed, "resolutions": cfg.resolutions, "tolerances": cfg.tolerances, "net_cap": cfg.net_cap,
            "sample_points": cfg.sample_points}


def _emit(report, out, timings):
    text = dumps(report)
    if out is None:
        sys.stdout.write(text)
        return
    write_atomic(out, text)
    write_atomic(out + ".timings.json", dumps(timings))


def cmd_eval(args):
    cfg = RunConfig.load(args.config, args.seed)
    registry = Registry(cfg)
    targets = [args.target] if args.target else [n for s in ("bridges", "treks", "propinquity")
                                                for n in registry.names(s)]
    if not targets:
        raise CliError(EXIT_INVALID, "config defines nothing to evaluate; pass --target")
    results, timings = {}, {}
    for name in targets:
        t0 = time.perf_counter()
        results[name] = evaluate(registry, name)
        timings[name] = time.perf_counter() - t0
    report = {"command": "eval", "config": os.path.basename(args.config), "settings": _config_block(cfg),
              "seed": cfg.seed, "results": results}
    _emit(report, args.out, {"seconds": timings})
    return EXIT_OK


def cmd_verify(args):
    if args.suite not in SUITES:
        raise CliError(EXIT_INVALID, f"unknown suite {args.suite!r}; expected one of {', '.join(SUITES)}")
    cfg = RunConfig.load(args.config, args.seed) if args.config else RunConfig(seed=args.seed or 0)
    registry = Registry(cfg) if args.config else None
    t0 = time.perf_counter()
    reports = run_suite(args.suite, registry, args.trials, cfg.seed, cfg.settings)
    elapsed = time.perf_counter() - t0
    passed = all(r.passed for r in reports)
    report = {"command": "verify", "suite": args.suite, "config": os.path.basename(args.config) if args.config
              else None, "settings": _config_block(cfg), "seed": cfg.seed, "trials": args.trials,
              "passed": passed, "results": [r.to_json() for r in reports]}
    _emit(report, args.out, {"seconds": {args.suite: elapsed}})
    for r in reports:
        if not r.passed:
            print(f"FAIL {r.name}: witness {json.dumps(r.witness, default=str)[:400]}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------- report merging

def _rows_from(name, report):
    rows = []
    if report.get("command") == "verify":
        for r in report["results"]:
            rows.append({"name": f"{name}:{r['name']}", "value": r["worst_ratio"], "bound": None,
                         "status": "ok" if r["passed"] else "VIOLATION"})
        return rows
    for target, entry in report.get("results", {}).items():
        rows.extend(_entry_rows(f"{name}:{target}", entry))
    return rows


def _interval_text(iv):
    return f"[{iv['lower']:.6g}, {iv['upper']:.6g}]"


def _entry_rows(prefix, entry):
    rows = []
    kind = entry.get("kind")
    if kind == "bridge":
        for q, iv in entry["quantities"].items():
            rows.append({"name": f"{prefix}.{q}", "value": _interval_text(iv), "bound": None, "status": "ok"})
    elif kind == "trek":
        rows.append({"name": f"{prefix}.length", "value": _interval_text(entry["length"]), "bound": None,
                     "status": "ok"})
    elif kind == "propinquity":
        rows.append({"name": f"{prefix}.upper", "value": _interval_text(entry["upper"]["length"]), "bound": None,
                     "status": "ok"})
    for b in entry.get("bounds", []):
        ok = b["value"] <= b["bound"] + b.get("slack", 0.0)
        rows.append({"name": f"{prefix}.{b['name']}", "value": b["value"], "bound": b["bound"] + b.get("slack", 0.0),
                     "status": "ok" if ok else "VIOLATION"})
    return rows


def merge_reports(paths):
    rows = []
    for path in paths:
        try:
            with open(path) as fh:
                report = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_PARSE, f"cannot read report {path}: {exc}") from exc
        if not isinstance(report, dict) or "command" not in report:
            raise CliError(EXIT_PARSE, f"{path} is not a report")
        rows.extend(_rows_from(os.path.splitext(os.path.basename(path))[0], report))
    rows.sort(key=lambda r: r["name"])
    return rows


def format_table(rows):
    def cell(v):
        if v is None:
            return "-"
        return f"{v:.6g}" if isinstance(v, float) else str(v)
    header = ("name", "value", "bound", "status")
    body = [(r["name"], cell(r["value"]), cell(r["bound"]), r["status"]) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["   " + "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for b in body:
        mark = "!! " if b[3] == "VIOLATION" else "   "
        lines.append(mark + "  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip())
    return "\n".join(lines) + "\n"


def cmd_report(args):
    paths = []
    for pattern in args.reports:
        hits = sorted(glob.glob(pattern))
        paths.extend(hits if hits else [pattern])
    paths = [p for p in dict.fromkeys(paths) if not p.endswith(".timings.json")]
    if not paths:
        raise CliError(EXIT_PARSE, "no reports given")
    rows = merge_reports(paths)
    sys.stdout.write(format_table(rows))
    if args.out:
        write_atomic(args.out, dumps({"command": "report", "rows": rows}))
    return EXIT_FAIL if any(r["status"] == "VIOLATION" for r in rows) else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="modprop", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    ev = sub.add_parser("eval", help="evaluate bridges, treks or propinquity bounds named in a config")
    ev.add_argument("--config", required=True)
    ev.add_argument("--target")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)
    ve = sub.add_parser("verify", help="run a property suite")
    ve.add_argument("--suite", required=True)
    ve.add_argument("--config")
    ve.add_argument("--trials", type=int, default=20)
    ve.add_argument("--seed", type=int)
    ve.add_argument("--out")
    ve.set_defaults(func=cmd_verify)
    re_ = sub.add_parser("report", help="merge reports into one table")
    re_.add_argument("reports", nargs="+")
    re_.add_argument("--out")
    re_.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigReferenceError, StructureError, InvalidPivot, InvalidSeminorm, KeyError, TypeError,
            ValueError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NetCapExceeded, SolverFailure, CertificateFailure) as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
