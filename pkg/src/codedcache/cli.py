"""Batch command line: ``codedcache {analyze,simulate,verify} --config FILE``.

Configs are YAML documents validated against ``CONFIG_SCHEMA``; unknown
keys are rejected.  Exit status: 0 success, 2 configuration error,
3 verification failure, 4 resource guard.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import delivery, verification
from .model import InvalidParameterError, SystemParams
from .sim import MAX_VERTICES_ENV, ExperimentSpec, sweep

log = logging.getLogger("codedcache")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_GUARD = 0, 2, 3, 4

ANALYZE_COLUMNS = ["axis", "value", "policy", "m_tilde", "rub", "psi", "mbar",
                   "lfu_rate", "uniform_rub"]
SIMULATE_COLUMNS = ANALYZE_COLUMNS + ["mean_rate", "ci95", "decode_pass_rate", "trials", "B"]

_number = {"type": "number"}
_posint = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system"],
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "m", "M"],
            "properties": {
                "n": _posint, "m": _posint, "M": {"type": "number", "minimum": 0},
                "B": _posint, "seed": {"type": "integer", "minimum": 0},
            },
        },
        "popularity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "minimum": 0},
                "q": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "oneOf": [{"required": ["alpha"]}, {"required": ["q"]}],
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["auto", "rap", "random_lfu", "lfu", "uniform", "naive"]},
                "m_tilde": {"oneOf": [{"const": "auto"}, _posint]},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "values"],
            "properties": {
                "axis": {"enum": ["M", "n", "m", "alpha", "B"]},
                "values": {"type": "array", "items": _number},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": _posint,
                "placement": {"enum": ["fresh", "fixed"]},
                "coloring": {"enum": list(delivery.COLORING_POLICIES)},
                "restarts": {"type": "integer", "minimum": 0},
                "verify_decode": {"type": "boolean"},
                "payload_bytes": _posint,
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": _posint,
                "rho_samples": _posint,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "name": {"type": "string"}},
        },
    },
}


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    return cfg


def spec_from_config(cfg: dict, seed: int | None = None, workers: int = 1) -> ExperimentSpec:
    sysc = cfg["system"]
    pop = cfg.get("popularity", {"alpha": 0.0})
    pol = cfg.get("policy", {})
    simc = cfg.get("simulation", {})
    m_tilde = pol.get("m_tilde", "auto")
    try:
        params = SystemParams(
            n=sysc["n"], m=sysc["m"], M=float(sysc["M"]), B=sysc.get("B", 1),
            seed=sysc.get("seed", 0) if seed is None else seed)
        kwargs = {}
        if MAX_VERTICES_ENV in os.environ:
            kwargs["max_vertices"] = int(os.environ[MAX_VERTICES_ENV])
        return ExperimentSpec(
            params=params,
            alpha=pop.get("alpha"),
            q=tuple(pop["q"]) if "q" in pop else None,
            policy=pol.get("name", "auto"),
            m_tilde=None if m_tilde == "auto" else int(m_tilde),
            trials=simc.get("trials", 200),
            placement=simc.get("placement", "fixed"),
            coloring=simc.get("coloring", "degree"),
            restarts=simc.get("restarts", 20),
            verify_decode=simc.get("verify_decode", True),
            payload_bytes=simc.get("payload_bytes", 32),
            workers=workers,
            **kwargs,
        )
    except (InvalidParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _axis_values(cfg: dict, spec: ExperimentSpec):
    if "sweep" in cfg:
        return cfg["sweep"]["axis"], cfg["sweep"]["values"]
    return "M", [spec.params.M]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


class _Outputs:
    """Collects output files and removes them if the command fails."""

    def __init__(self, outdir: Path, name: str):
        self.outdir = outdir
        self.name = name
        self.written: list[Path] = []

    def path(self, suffix: str) -> Path:
        p = self.outdir / f"{self.name}{suffix}"
        self.written.append(p)
        return p

    def write_csv(self, suffix: str, columns, rows):
        self.outdir.mkdir(parents=True, exist_ok=True)
        with open(self.path(suffix), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r.get(c)) for c in columns])

    def write_json(self, suffix: str, obj):
        self.outdir.mkdir(parents=True, exist_ok=True)
        with open(self.path(suffix), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def cleanup(self):
        for p in self.written:
            p.unlink(missing_ok=True)


def _p_rows(rows):
    out = []
    for r in rows:
        for f, pf in enumerate(r.get("p") or [], start=1):
            out.append({"axis": r["axis"], "value": r["value"], "file": f, "p": pf})
    return out


def cmd_analyze(cfg: dict, outputs: _Outputs, seed=None, workers=1) -> int:
    spec = spec_from_config(cfg, seed, workers)
    axis, values = _axis_values(cfg, spec)
    rows = sweep(spec, axis, values, simulate=False)
    outputs.write_csv(".csv", ANALYZE_COLUMNS, rows)
    outputs.write_csv("_p.csv", ["axis", "value", "file", "p"], _p_rows(rows))
    outputs.write_json(".json", {"command": "analyze", "config": cfg, "rows": rows})
    return EXIT_OK


def cmd_simulate(cfg: dict, outputs: _Outputs, seed=None, workers=1) -> int:
    spec = spec_from_config(cfg, seed, workers)
    axis, values = _axis_values(cfg, spec)
    rows = sweep(spec, axis, values, simulate=True)
    outputs.write_csv(".csv", SIMULATE_COLUMNS, rows)
    outputs.write_json(".json", {"command": "simulate", "config": cfg, "rows": rows})
    return EXIT_OK


def cmd_verify(cfg: dict, outputs: _Outputs | None = None, seed=None, workers=1,
               builder=delivery.build_conflict_graph) -> int:
    vc = cfg.get("verify", {})
    base = cfg.get("system", {}).get("seed", 0) if seed is None else seed
    seeds = range(base, base + vc.get("seeds", 100))
    results = verification.run_all(seeds, builder=builder,
                                   rho_samples=vc.get("rho_samples", 200_000))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.checked} checked, {r.failures} failed")
        if not r.passed:
            print(f"  counterexample: {r.counterexample}")
    if outputs is not None:
        outputs.write_json("_verify.json", [r.__dict__ for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="codedcache", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("-c", "--config", required=True, help="YAML configuration file")
    ap.add_argument("-o", "--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="override system.seed")
    ap.add_argument("-j", "--threads", type=int, default=1, help="worker threads for trials")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"codedcache: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outc = cfg.get("output", {})
    outdir = Path(args.out or outc.get("dir", "."))
    outputs = _Outputs(outdir, outc.get("name", args.command))
    try:
        return COMMANDS[args.command](cfg, outputs, seed=args.seed, workers=args.threads)
    except (ConfigError, InvalidParameterError) as exc:
        outputs.cleanup()
        print(f"codedcache: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except delivery.SizeLimitError as exc:
        outputs.cleanup()
        print(f"codedcache: resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except BaseException:
        outputs.cleanup()
        raise


if __name__ == "__main__":
    sys.exit(main())
