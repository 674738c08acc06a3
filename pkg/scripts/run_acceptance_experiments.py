#!/usr/bin/env python3
"""Run the full desk-scale experiment battery and write per-run reports.

Mirrors the configurations the acceptance suite uses, but persists every
artifact (latents, overlap laws, histograms, manifests) under --out so the
runs can be inspected or re-verified with `rfsphere verify <dir>`.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from rfsphere.harness import default_config, run_experiment
from rfsphere.model import ModelParams
from rfsphere.walks import FieldDistributionSpec


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output root directory")
    parser.add_argument("--seed", type=int, default=42, help="master seed")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    root = Path(args.out)

    runs = []
    runs.append(("partition_check", default_config("partition_check", args.seed)))
    runs.append(("ultrametricity", default_config("ultrametricity", args.seed)))
    runs.append(("gibbs_sample", replace(default_config("gibbs_sample", args.seed),
                                         n=500)))
    runs.append(("overlap_unscaled_ordered",
                 default_config("overlap_unscaled", args.seed)))
    runs.append((
        "overlap_unscaled_paramagnetic",
        replace(default_config("overlap_unscaled", args.seed),
                params=ModelParams(2, 1.0)),
    ))
    runs.append(("overlap_scaled", default_config("overlap_scaled", args.seed)))
    runs.append((
        "metastate_aw",
        replace(default_config("metastate_aw", args.seed), workers=args.workers),
    ))
    runs.append((
        "metastate_aw_isotropic",
        replace(
            default_config("metastate_aw", args.seed),
            field=FieldDistributionSpec("gaussian", d=2, sigma=0.2 * np.eye(2)),
            workers=args.workers,
        ),
    ))
    runs.append((
        "metastate_ns_d2",
        replace(default_config("metastate_ns", args.seed), brownian_steps=10_000),
    ))
    runs.append((
        "metastate_ns_d1",
        replace(
            default_config("metastate_ns", args.seed),
            params=ModelParams(1, 4.0),
            field=FieldDistributionSpec("two_point", d=1, two_point_a=np.array([0.5])),
            big_n=10_000,
        ),
    ))
    runs.append(("walk_diagnostics", default_config("walk_diagnostics", args.seed)))

    failures = 0
    for name, cfg in runs:
        cfg = replace(cfg, out_dir=str(root / name))
        start = time.time()
        records, _ = run_experiment(cfg)
        elapsed = time.time() - start
        bad = [r for r in records if not r.passed]
        failures += len(bad)
        status = "ok" if not bad else f"{len(bad)} failing checks"
        print(f"{name:32s} {elapsed:7.1f}s  {status}")
        for rec in records:
            mark = "PASS" if rec.passed else "FAIL"
            print(f"    {mark} {rec.name}: {rec.value:.6g} vs {rec.comparator:.6g}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
