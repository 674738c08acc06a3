"""Command-line entry: one subcommand per experiment kind plus report verification.

Precedence for settings: built-in preset < --config file < explicit flags.
A master seed is mandatory for every experiment run.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    EXPERIMENT_KINDS,
    ExperimentConfig,
    default_config,
    run_experiment,
    verify_acceptance,
)


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfsphere",
        description="Seeded experiments for the random-field spherical model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        cmd = sub.add_parser(kind, help=f"run the {kind} experiment")
        cmd.add_argument("--config", help="JSON config file (overrides the preset)")
        cmd.add_argument("--seed", type=int, required=True, help="master seed (u64)")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--workers", type=int, help="worker processes")
        cmd.add_argument("--n", type=int, help="volume (site count)")
        cmd.add_argument("--big-n", type=int, dest="big_n", help="path length")
        cmd.add_argument("--pairs", type=int, help="replica pairs")
        cmd.add_argument("--replicas", type=int, help="disorder replicas")
        cmd.add_argument("--paths", type=int, help="path count")
        cmd.add_argument("--cells", type=int, help="partition cells")
        cmd.add_argument("--beta", type=float, help="inverse temperature")
    ver = sub.add_parser("verify", help="render the pass/fail report of a run")
    ver.add_argument("manifest", help="run directory or manifest.json path")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = default_config(args.command, seed=args.seed, out_dir=args.out or "results")
    data = cfg.to_dict()
    if args.config:
        with open(args.config) as fh:
            _deep_update(data, json.load(fh))
    for name in ("n", "big_n", "pairs", "replicas", "paths", "cells", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.beta is not None:
        data["params"]["inverse_temperature"] = args.beta
    data["seed"] = args.seed
    if args.out:
        data["out_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        report, status = verify_acceptance(args.manifest)
        print(report)
        return status
    cfg = _config_from_args(args)
    records, manifest = run_experiment(cfg)
    failures = 0
    for rec in records:
        status = "PASS" if rec.passed else "FAIL"
        failures += int(not rec.passed)
        print(
            f"{status} {rec.name}: value={rec.value:.6g} comparator={rec.comparator:.6g} "
            f"tol={rec.tolerance:g} [{rec.provenance}]"
        )
    print(f"results written to {cfg.out_dir} ({len(manifest.result_files)} files)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
