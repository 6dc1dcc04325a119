"""Command line: ``run <config.json>`` and ``verify-all [--fast]``.

Outputs go to ``--output`` (default ``./symperturb-out``): ``report.json``
plus one CSV per data stream. Exit status is 1 when any certificate fails,
2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigInvalid, SymperturbError
from .experiments import DEFAULTS, FAST_OVERRIDES, RUNNERS

log = logging.getLogger("symperturb")

EXPERIMENTS = tuple(RUNNERS) + ("verify-all",)
TOP_LEVEL_KEYS = {"experiment", "seed", "parameters", "output_path"}


# ------------------------------------------------------------------ config


def _check_tolerances(tree, path):
    for key, val in tree.items():
        here = f"{path}.{key}"
        if isinstance(val, dict):
            if key == "tolerances":
                for name, t in val.items():
                    if not isinstance(t, (int, float)) or isinstance(t, bool) or t <= 0:
                        raise ConfigInvalid(f"tolerance must be a positive number: {t!r}", f"{here}.{name}")
            else:
                _check_tolerances(val, here)
        elif key.endswith("_tol") or key == "eps":
            if not isinstance(val, (int, float)) or isinstance(val, bool) or val <= 0:
                raise ConfigInvalid(f"must be a positive number: {val!r}", here)


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        here = f"{path}.{key}"
        if key not in defaults:
            raise ConfigInvalid(f"unknown key {key!r}", here)
        base = defaults[key]
        if isinstance(base, dict):
            if not isinstance(val, dict):
                raise ConfigInvalid("expected a table", here)
            if key == "tolerances":
                unknown = set(val) - set(base)
                if unknown:
                    raise ConfigInvalid(f"unknown certificate {sorted(unknown)[0]!r}", here)
                out[key].update(val)
            else:
                out[key] = _merge(base, val, here)
        elif isinstance(base, bool) or not isinstance(base, (int, float, list)):
            out[key] = val
        elif isinstance(base, list):
            if not isinstance(val, list) or len(val) != len(base) and key not in ("x", "n_values"):
                raise ConfigInvalid(f"expected a list like {base!r}", here)
            out[key] = val
        elif isinstance(base, int):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigInvalid(f"expected an integer, got {val!r}", here)
            out[key] = val
        else:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigInvalid(f"expected a number, got {val!r}", here)
            out[key] = float(val)
    return out


def validate_config(raw, seed_override=None):
    """Full config with defaults filled in; raises ConfigInvalid naming the field."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object", "$")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown key {sorted(unknown)[0]!r}", f"$.{sorted(unknown)[0]}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigInvalid(f"experiment must be one of {', '.join(EXPERIMENTS)}", "$.experiment")
    seed = raw.get("seed") if seed_override is None else seed_override
    if seed is None:
        raise ConfigInvalid("seed is mandatory", "$.seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigInvalid("seed must be an unsigned 64-bit integer", "$.seed")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("parameters must be a table", "$.parameters")
    if exp == "verify-all":
        merged = _merge({"fast": False}, params, "$.parameters")
    else:
        merged = _merge(DEFAULTS[exp], params, "$.parameters")
    _check_tolerances(merged, "$.parameters")
    cfg = {"experiment": exp, "seed": seed, "parameters": merged}
    if "output_path" in raw:
        cfg["output_path"] = str(raw["output_path"])
    return cfg


def load_config(path, seed_override=None):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", "$") from exc
    return validate_config(raw, seed_override)


# ------------------------------------------------------------------ output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(int(v))
    return str(v)


def write_stream(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_experiment(cfg, out_dir):
    """Run one (non-composite) experiment; returns the report dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    error = None
    try:
        outcome = RUNNERS[cfg["experiment"]](cfg["parameters"], cfg["seed"])
        certs = [c.as_dict() for c in outcome.certificates]
        streams = {}
        for name, (header, rows) in outcome.streams.items():
            fname = f"{name}.csv"
            write_stream(out_dir / fname, header, rows)
            streams[name] = {"file": fname, "columns": header, "rows": len(rows)}
        summary = outcome.summary
    except SymperturbError as exc:
        error = f"{type(exc).__name__}: {exc}"
        certs, streams, summary = [{"name": "pipeline", "value": 1.0, "threshold": 0.0, "passed": False}], {}, {}
    report = {
        "config": cfg,
        "certificates": certs,
        "passed": all(c["passed"] for c in certs),
        "streams": streams,
        "summary": summary,
        "error": error,
        "wall_time_s": time.perf_counter() - t0,
        "version": __version__,
    }
    (out_dir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return report


def verify_all(seed, out_dir, fast=False):
    """Every experiment with default parameters; one subdirectory each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    reports = {}
    for name in RUNNERS:
        params = copy.deepcopy(DEFAULTS[name])
        if fast:
            params.update(FAST_OVERRIDES[name])
        cfg = {"experiment": name, "seed": seed, "parameters": params}
        log.info("running %s", name)
        reports[name] = run_experiment(cfg, out_dir / name)
        log.info("%s: %s", name, "pass" if reports[name]["passed"] else "FAIL")
    combined = {
        "config": {"experiment": "verify-all", "seed": seed, "parameters": {"fast": fast}},
        "experiments": {k: {"passed": r["passed"], "certificates": r["certificates"]} for k, r in reports.items()},
        "passed": all(r["passed"] for r in reports.values()),
        "wall_time_s": time.perf_counter() - t0,
        "version": __version__,
    }
    (out_dir / "report.json").write_text(json.dumps(_jsonable(combined), indent=2, sort_keys=True) + "\n")
    return combined


def run(cfg, out_dir=None):
    out_dir = out_dir or cfg.get("output_path") or "symperturb-out"
    if cfg["experiment"] == "verify-all":
        return verify_all(cfg["seed"], out_dir, cfg["parameters"]["fast"])
    return run_experiment(cfg, out_dir)


# ------------------------------------------------------------------ entry point


def build_parser():
    # shared options are accepted both before and after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=argparse.SUPPRESS,
                        help="output directory (default: config output_path or ./symperturb-out)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    ap = argparse.ArgumentParser(prog="symperturb", description=__doc__.splitlines()[0], parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one experiment from a JSON config")
    r.add_argument("config")
    v = sub.add_parser("verify-all", parents=[common], help="run every experiment with default parameters")
    v.add_argument("--fast", action="store_true", help="smaller probe counts")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    for name, default in (("output", None), ("seed", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.seed)
        else:
            seed = 0 if args.seed is None else args.seed
            cfg = validate_config({"experiment": "verify-all", "seed": seed,
                                   "parameters": {"fast": bool(args.fast)}})
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    report = run(cfg, args.output)
    if cfg["experiment"] == "verify-all":
        for name, r in report["experiments"].items():
            print(f"{name}: {'pass' if r['passed'] else 'FAIL'}")
    else:
        for c in report["certificates"]:
            print(f"{c['name']}: {c['value']:.3e} <= {c['threshold']:.1e} {'pass' if c['passed'] else 'FAIL'}")
        if report.get("error"):
            print(report["error"], file=sys.stderr)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
