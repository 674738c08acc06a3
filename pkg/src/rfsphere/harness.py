"""Seeded experiment orchestration, persistence and acceptance reporting.

Every experiment is deterministic given its master seed: disorder replica r
always draws from RNG stream (seed, spawn_key=(r,)), chains and conditional
draws use fixed offset streams, and replicas are processed in fixed-size
blocks so a worker pool never changes the outputs, only the wall clock.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats as sps

from .basis import build_basis
from .limits import OverlapLawSpec, TiltedSphereLaw, rho_law, rho_mean_d1
from .measure import (
    aw_density_cells,
    bl_distance_1d,
    cell_histogram,
    eq_partition,
    fingerprint_state,
    tv_distance,
)
from .model import (
    FieldScaling,
    ModelParams,
    classify_regime,
    compute_sample_stats,
)
from .overlap import overlap_experiment, predicted_overlap_limit
from .sampler import ChainConfig, _latents_to_configs, run_latent_chains
from .walks import (
    FieldDistributionSpec,
    brownian_occupation_mean,
    generate_disorder,
    recurrence_statistic,
    walk_path,
)

__all__ = [
    "EXPERIMENT_KINDS",
    "ExperimentConfig",
    "ResultRecord",
    "RunManifest",
    "default_config",
    "run_experiment",
    "persist_results",
    "verify_acceptance",
    "format_float",
]

EXPERIMENT_KINDS = (
    "gibbs_sample",
    "overlap_unscaled",
    "overlap_scaled",
    "ultrametricity",
    "metastate_aw",
    "metastate_ns",
    "walk_diagnostics",
    "partition_check",
)

AW_BLOCK_SIZE = 250  # fixed replica block size; workers only distribute blocks


# ---------------------------------------------------------------------------
# configuration and records


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: ModelParams
    field: FieldDistributionSpec
    seed: int
    out_dir: str = "results"
    n: int = 1000
    big_n: int = 10_000
    replicas: int = 200
    pairs: int = 200
    paths: int = 200
    draws: int = 20
    cells: int = 16
    triples: int = 100_000
    brownian_steps: int = 10_000
    configs_per_state: int = 100
    window: int = 16
    chain: ChainConfig = field(default_factory=ChainConfig)
    workers: int = 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"]["field_scaling"] = self.params.field_scaling.value
        fld = out["field"]
        for key in ("two_point_a", "sigma", "half_widths"):
            if fld[key] is not None:
                fld[key] = np.asarray(fld[key]).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        p = dict(data.pop("params"))
        p["field_scaling"] = FieldScaling(p["field_scaling"])
        f = {k: v for k, v in data.pop("field").items() if v is not None}
        c = dict(data.pop("chain"))
        return cls(
            params=ModelParams(**p), field=FieldDistributionSpec(**f),
            chain=ChainConfig(**c), **data,
        )


@dataclass(frozen=True)
class ResultRecord:
    """One pass/fail check: a metric against a comparator at a tolerance."""

    name: str
    value: float
    comparator: float
    tolerance: float
    rule: str  # "abs": |value - comparator| <= tol; "le" / "ge": one-sided
    provenance: str  # which in-repo oracle produced the comparator
    passed: bool

    @classmethod
    def check(cls, name, value, comparator, tolerance, rule, provenance) -> "ResultRecord":
        value = float(value)
        comparator = float(comparator)
        if rule == "abs":
            ok = abs(value - comparator) <= tolerance
        elif rule == "le":
            ok = value <= comparator + tolerance
        elif rule == "ge":
            ok = value >= comparator - tolerance
        else:
            raise ValueError(f"unknown rule {rule!r}")
        return cls(name, value, comparator, float(tolerance), rule, provenance, ok)


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock_seconds: float
    stage_seeds: dict
    result_files: dict  # name -> sha256 digest


def default_config(kind: str, seed: int, out_dir: str = "results") -> ExperimentConfig:
    """Reasonable desk-scale defaults per experiment kind."""
    if kind not in EXPERIMENT_KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    unit = ModelParams(2, 8.0, FieldScaling.UNIT)
    scaled = ModelParams(2, 8.0, FieldScaling.INVERSE_SQRT_VOLUME)
    iso = FieldDistributionSpec("two_point", d=2, two_point_a=np.full(2, math.sqrt(0.125)))
    aniso = FieldDistributionSpec(
        "gaussian", d=2, sigma=np.diag([0.1, 0.4])
    )
    base = dict(seed=seed, out_dir=out_dir)
    if kind == "gibbs_sample":
        return ExperimentConfig(kind=kind, params=unit, field=iso, n=500, **base)
    if kind == "overlap_unscaled":
        return ExperimentConfig(kind=kind, params=unit, field=iso, n=1000, pairs=500,
                                chain=ChainConfig(burn_in=2500), **base)
    if kind == "overlap_scaled":
        return ExperimentConfig(kind=kind, params=scaled, field=iso, n=10_000,
                                pairs=2000, chain=ChainConfig(burn_in=1500), **base)
    if kind == "ultrametricity":
        return ExperimentConfig(kind=kind, params=scaled, field=iso, **base)
    if kind == "metastate_aw":
        return ExperimentConfig(kind=kind, params=unit, field=aniso, n=1000,
                                replicas=2000, chain=ChainConfig(burn_in=2500, chain_count=2),
                                **base)
    if kind == "metastate_ns":
        return ExperimentConfig(kind=kind, params=unit, field=aniso, n=1000,
                                big_n=1000, paths=1000, **base)
    if kind == "walk_diagnostics":
        return ExperimentConfig(kind=kind, params=unit, field=iso, big_n=100_000,
                                paths=100, **base)
    return ExperimentConfig(kind=kind, params=unit, field=iso, **base)


# ---------------------------------------------------------------------------
# serialization helpers


def format_float(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonl_bytes(rows: list) -> bytes:
    buf = io.StringIO()
    for row in rows:
        parts = []
        for key, val in row.items():
            if isinstance(val, (list, tuple, np.ndarray)):
                inner = ", ".join(format_float(v) for v in np.asarray(val).ravel())
                parts.append(f'"{key}": [{inner}]')
            elif isinstance(val, str):
                parts.append(f'"{key}": {json.dumps(val)}')
            else:
                parts.append(f'"{key}": {format_float(val)}')
        buf.write("{" + ", ".join(parts) + "}\n")
    return buf.getvalue().encode()


def _csv_bytes(header: list, rows: list) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
    return buf.getvalue().encode()


def records_csv(records: list) -> bytes:
    header = ["name", "value", "comparator", "tolerance", "rule", "provenance", "passed"]
    rows = [
        [r.name, r.value, r.comparator, r.tolerance, r.rule, r.provenance, r.passed]
        for r in records
    ]
    return _csv_bytes(header, rows)


def persist_results(records, manifest: RunManifest, artifacts: dict, out_dir) -> dict:
    """Write artifact files, the records CSV, and the digest manifest."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = dict(artifacts)
    payloads["records.csv"] = records_csv(records)
    digests = {}
    for name, data in payloads.items():
        path = out / name
        path.write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    manifest.result_files = digests
    manifest_bytes = json.dumps(
        {
            "config": manifest.config,
            "version": manifest.version,
            "wall_clock_seconds": manifest.wall_clock_seconds,
            "stage_seeds": manifest.stage_seeds,
            "result_files": manifest.result_files,
        },
        indent=2,
        sort_keys=True,
    ).encode()
    (out / "manifest.json").write_bytes(manifest_bytes)
    return digests


def verify_acceptance(manifest_path) -> tuple[str, int]:
    """Render the pass/fail report for a persisted run; nonzero on failure."""
    import pathlib

    folder = pathlib.Path(manifest_path)
    if folder.name == "manifest.json":
        folder = folder.parent
    manifest = json.loads((folder / "manifest.json").read_text())
    lines = []
    failures = 0
    seen = 0
    for name, digest in sorted(manifest["result_files"].items()):
        blob = (folder / name).read_bytes()
        if hashlib.sha256(blob).hexdigest() != digest:
            lines.append(f"FAIL {name}: digest mismatch")
            failures += 1
    records_file = folder / "records.csv"
    if not records_file.exists():
        lines.append("FAIL records.csv missing")
        failures += 1
    else:
        with records_file.open() as fh:
            for row in csv.DictReader(fh):
                seen += 1
                ok = row["passed"] == "True"
                status = "PASS" if ok else "FAIL"
                if not ok:
                    failures += 1
                lines.append(
                    f"{status} {row['name']}: value={row['value']} "
                    f"comparator={row['comparator']} tol={row['tolerance']} "
                    f"[{row['provenance']}]"
                )
    if seen == 0:
        lines.append("FAIL no result records found")
        failures += 1
    return "\n".join(lines), (1 if failures else 0)


# ---------------------------------------------------------------------------
# experiment implementations


def exp_gibbs_sample(cfg: ExperimentConfig):
    from .sampler import sample_gibbs
    from .model import evaluate_observables

    h = generate_disorder(cfg.field, cfg.n, cfg.seed, stream=0)
    chain = replace(cfg.chain, seed=cfg.seed)
    draws = sample_gibbs(h, cfg.params, chain, cfg.configs_per_state)
    constraint = np.einsum("knd,knd->k", draws.configurations, draws.configurations) / cfg.n
    violation = float(np.max(np.abs(constraint - 1.0)))
    records = [
        ResultRecord.check(
            "constraint_conservation", violation, 0.0, 1e-9, "le",
            "exact shifted-sphere construction",
        ),
        ResultRecord.check(
            "chain_split_ratio", draws.diagnostics.split_chain_ratio, 1.1, 0.0, "le",
            "split-chain variance ratio threshold",
        ),
    ]
    obs_rows = []
    for k in range(draws.configurations.shape[0]):
        o = evaluate_observables(draws.configurations[k], h, cfg.params)
        obs_rows.append([k, o.energy, float(np.linalg.norm(o.magnetization)), o.constraint])
    artifacts = {
        "latents.jsonl": _jsonl_bytes(
            [{"x": draws.latents[k, : cfg.params.d], "y": draws.latents[k, cfg.params.d :]}
             for k in range(draws.latents.shape[0])]
        ),
        "observables.csv": _csv_bytes(
            ["index", "energy", "magnetization_norm", "constraint"], obs_rows
        ),
        "diagnostics.json": json.dumps(
            {
                "acceptance_rate": draws.diagnostics.acceptance_rate,
                "split_chain_ratio": draws.diagnostics.split_chain_ratio,
                "boundary_rejections": draws.diagnostics.boundary_rejections,
                "ess": draws.diagnostics.ess.tolist(),
            },
            sort_keys=True,
        ).encode(),
    }
    return records, artifacts


def exp_overlap_unscaled(cfg: ExperimentConfig):
    h = generate_disorder(cfg.field, cfg.n, cfg.seed, stream=0)
    chain = replace(cfg.chain, seed=cfg.seed)
    result = overlap_experiment(h, cfg.params, cfg.pairs, chain)
    predicted = predicted_overlap_limit(cfg.params, cfg.field.second_moments)
    records = [
        ResultRecord.check(
            "overlap_mean", result.law.mean(), predicted, 0.02, "abs",
            "deterministic limit max(1 - d/beta, ||s||^2)",
        ),
        ResultRecord.check(
            "overlap_stdev", result.law.stdev(), 0.05, 0.0, "le",
            "concentration of the trivial overlap law",
        ),
        ResultRecord.check(
            "constraint_conservation", result.max_constraint_violation, 0.0, 1e-9, "le",
            "exact shifted-sphere construction",
        ),
    ]
    artifacts = {
        "overlaps.jsonl": _jsonl_bytes([{"overlap": v} for v in result.law.values]),
        "summary.csv": _csv_bytes(
            ["mean", "stdev", "predicted", "realized_radial"],
            [[result.law.mean(), result.law.stdev(), predicted, result.realized_radial]],
        ),
    }
    return records, artifacts


def exp_overlap_scaled(cfg: ExperimentConfig):
    h = generate_disorder(cfg.field, cfg.n, cfg.seed, stream=0)
    chain = replace(cfg.chain, seed=cfg.seed)
    result = overlap_experiment(h, cfg.params, cfg.pairs, chain)
    spec: OverlapLawSpec = result.comparator
    records = []
    if cfg.params.d == 1:
        predicted = rho_mean_d1(spec)
        records.append(
            ResultRecord.check(
                "overlap_conditional_mean", result.law.mean(), predicted, 0.03, "abs",
                "closed form (r*)^2 tanh^2(beta r* ||S_n||/sqrt(n))",
            )
        )
        comparator_law = rho_law(spec, "sample", count=100_000,
                                 rng=np.random.default_rng(cfg.seed + 7))
    else:
        comparator_law = rho_law(spec, "sample", count=100_000,
                                 rng=np.random.default_rng(cfg.seed + 7))
        distance = bl_distance_1d(result.law, comparator_law)
        records.append(
            ResultRecord.check(
                "overlap_bl_distance", distance, 0.0, 0.05, "le",
                "sampled radial overlap family at the realized ||S_n||/sqrt(n)",
            )
        )
    records.append(
        ResultRecord.check(
            "constraint_conservation", result.max_constraint_violation, 0.0, 1e-9,
            "le", "exact shifted-sphere construction",
        )
    )
    artifacts = {
        "overlaps.jsonl": _jsonl_bytes([{"overlap": v} for v in result.law.values]),
        "comparator.jsonl": _jsonl_bytes(
            [{"overlap": v} for v in comparator_law.values[:: max(1, comparator_law.count // 10_000)]]
        ),
        "summary.csv": _csv_bytes(
            ["mean", "stdev", "realized_radial", "kappa"],
            [[result.law.mean(), result.law.stdev(), result.realized_radial, spec.kappa]],
        ),
    }
    return records, artifacts


def exp_ultrametricity(cfg: ExperimentConfig):
    from .overlap import ultrametricity_rate

    beta = cfg.params.beta
    records = []
    rates = []
    for d in (1, 2):
        r_star = math.sqrt(max(0.0, 1.0 - d / beta))
        z = np.eye(d)[0] / (beta * r_star)  # kappa = 1
        law = TiltedSphereLaw(z=z, beta=beta, r_star=r_star)
        rate = ultrametricity_rate(law, cfg.triples, np.random.default_rng(cfg.seed + d))
        rates.append((d, law.kappa, rate))
        if d == 1:
            records.append(
                ResultRecord.check(
                    "ultrametric_violation_rate_d1", rate, 0.0, 0.0, "le",
                    "two-point sphere: violations impossible",
                )
            )
        else:
            records.append(
                ResultRecord.check(
                    "ultrametric_violation_rate_d2", rate, 0.05, 0.0, "ge",
                    "witness triples have positive density on the circle",
                )
            )
    artifacts = {
        "rates.csv": _csv_bytes(["d", "kappa", "violation_rate"], rates),
    }
    return records, artifacts


def _aw_block(args) -> np.ndarray:
    """Fingerprint directions for replicas [lo, hi); deterministic per replica."""
    cfg, lo, hi = args
    params, fld = cfg.params, cfg.field
    _, constants = classify_regime(params, fld.second_moments)
    block = hi - lo
    cc = cfg.chain.chain_count
    samples_per_chain = max(1, cfg.configs_per_state // cc)
    h_list = [generate_disorder(fld, cfg.n, cfg.seed, stream=r) for r in range(lo, hi)]
    means = np.stack([compute_sample_stats(h).mean for h in h_list])
    stdevs = np.stack([compute_sample_stats(h).stdev for h in h_list])
    chain_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(10, lo)))
    kept, _ = run_latent_chains(
        means, stdevs, params, cfg.n, replace(cfg.chain, seed=cfg.seed), samples_per_chain,
        chain_rng,
    )
    directions = np.empty((block, params.d))
    w = cfg.window
    for idx in range(block):
        basis = build_basis(h_list[idx])
        lat = kept[:, idx * cc : (idx + 1) * cc, :].reshape(-1, 2 * params.d)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11, lo + idx)))
        configs = _latents_to_configs(lat, basis, rng)
        fp = fingerprint_state(
            configs[:, :w, :], h_list[idx].values[:w], constants, params, latents=lat
        )
        directions[idx] = fp.direction
    return directions


def exp_metastate_aw(cfg: ExperimentConfig):
    part = eq_partition(cfg.params.d - 1, cfg.cells)
    masses = aw_density_cells(cfg.field.covariance, part)
    blocks = [
        (cfg, lo, min(cfg.replicas, lo + AW_BLOCK_SIZE))
        for lo in range(0, cfg.replicas, AW_BLOCK_SIZE)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_aw_block, blocks))
    else:
        parts = [_aw_block(b) for b in blocks]
    directions = np.vstack(parts)
    hist = cell_histogram(directions, part)
    tv = tv_distance(hist.fractions, masses)
    records = [
        ResultRecord.check(
            "aw_direction_tv", tv, 0.0, 0.05, "le",
            "per-cell quadrature of <Omega, Sigma^{-1} Omega>^{-d/2}",
        )
    ]
    artifacts = {
        "histogram.csv": _csv_bytes(
            ["cell", "observed_fraction", "predicted_mass"],
            [[k, hist.fractions[k], masses[k]] for k in range(part.num_cells)],
        ),
        "partition.json": json.dumps(part.to_dict(), sort_keys=True).encode(),
    }
    return records, artifacts


def _ns_positive_fraction_d1(cfg: ExperimentConfig) -> np.ndarray:
    fractions = np.empty(cfg.paths)
    for p in range(cfg.paths):
        path = walk_path(cfg.field, cfg.big_n, cfg.seed, stream=p)
        fractions[p] = float(np.mean(path.prefix[:, 0] > 0))
    return fractions


def _ns_walk_occupation_d2(cfg: ExperimentConfig, part) -> np.ndarray:
    total = np.zeros(part.num_cells)
    for p in range(cfg.paths):
        path = walk_path(cfg.field, cfg.big_n, cfg.seed, stream=p)
        dirs, ok = path.directions()
        hist = cell_histogram(dirs[ok], part)
        total += hist.fractions
    return total / cfg.paths


def _ns_gibbs_proxy_check(cfg: ExperimentConfig, part) -> tuple[int, int, list]:
    """Fingerprint directions at strided volumes vs the walk-direction cell."""
    from .model import DisorderSample

    _, constants = classify_regime(cfg.params, cfg.field.second_moments)
    volumes = np.unique(
        np.geomspace(100, max(200, min(cfg.big_n, 2000)), 10).astype(int)
    )
    # stream 0 gives the same field rows walk_path(..., stream=0) consumes
    h_full = generate_disorder(cfg.field, int(volumes.max()), cfg.seed, stream=0)
    prefix = np.cumsum(h_full.values, axis=0)
    hits = 0
    rows = []
    for k, n in enumerate(volumes):
        h = DisorderSample(values=h_full.values[:n], spec=cfg.field)
        stats = compute_sample_stats(h)
        chain = replace(cfg.chain, seed=cfg.seed * 97 + k)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(20, k)))
        kept, _ = run_latent_chains(
            stats.mean[None, :], stats.stdev[None, :], cfg.params, n, chain,
            max(1, cfg.configs_per_state // chain.chain_count), rng,
        )
        lat = kept.reshape(-1, 2 * cfg.params.d)
        basis = build_basis(h)
        crng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(21, k)))
        configs = _latents_to_configs(lat, basis, crng)
        fp = fingerprint_state(
            configs[:, : cfg.window, :], h.values[: cfg.window], constants, cfg.params,
            latents=lat,
        )
        walk_dir = prefix[n - 1] / np.linalg.norm(prefix[n - 1])
        cell_fp = int(part.assign(fp.direction[None, :])[0])
        cell_walk = int(part.assign(walk_dir[None, :])[0])
        adjacent = min(
            abs(cell_fp - cell_walk), part.num_cells - abs(cell_fp - cell_walk)
        ) <= 1
        hits += int(adjacent)
        rows.append([int(n), cell_fp, cell_walk, bool(adjacent)])
    return hits, len(volumes), rows


def exp_metastate_ns(cfg: ExperimentConfig):
    records = []
    artifacts = {}
    if cfg.params.d == 1:
        fractions = _ns_positive_fraction_d1(cfg)
        ks = float(sps.kstest(fractions, sps.arcsine.cdf).statistic)
        records.append(
            ResultRecord.check(
                "ns_positive_fraction_ks", ks, 0.0, 0.05, "le",
                "arcsine law of the positive occupation time",
            )
        )
        artifacts["positive_fractions.jsonl"] = _jsonl_bytes(
            [{"fraction": v} for v in fractions]
        )
        return records, artifacts

    part = eq_partition(cfg.params.d - 1, cfg.cells)
    walk_occ = _ns_walk_occupation_d2(cfg, part)
    bro = brownian_occupation_mean(
        cfg.field.covariance, cfg.brownian_steps, part, cfg.seed, cfg.paths
    )["occupation"]
    worst = float(np.max(np.abs(walk_occ - bro)))
    records.append(
        ResultRecord.check(
            "ns_occupation_max_cell_diff", worst, 0.0, 0.03, "le",
            "simulated projected Brownian occupation",
        )
    )
    hits, total, rows = _ns_gibbs_proxy_check(cfg, part)
    records.append(
        ResultRecord.check(
            "ns_gibbs_proxy_adjacency", hits / total, 0.9, 0.0, "ge",
            "walk-direction cell within one cell of the state fingerprint",
        )
    )
    artifacts["occupation.csv"] = _csv_bytes(
        ["cell", "walk", "brownian"],
        [[k, walk_occ[k], bro[k]] for k in range(part.num_cells)],
    )
    artifacts["proxy.csv"] = _csv_bytes(["n", "fingerprint_cell", "walk_cell", "adjacent"], rows)
    return records, artifacts


def exp_walk_diagnostics(cfg: ExperimentConfig):
    c_vals = []
    joint_flags = []
    for p in range(cfg.paths):
        path = walk_path(cfg.field, 2 * cfg.big_n, cfg.seed, stream=p)
        stat = recurrence_statistic(path)
        c_vals.append(stat["c_half"])
        joint_flags.append(stat["c_half"] <= 0.1 and stat["c_full"] < stat["c_half"])
    c_vals = np.asarray(c_vals)
    joint = int(np.sum(joint_flags))
    records = [
        ResultRecord.check(
            "conditioning_small_and_decreasing", joint / cfg.paths, 0.9, 0.0, "ge",
            "per-path: C_N <= 0.1 and C_{2N} < C_N",
        ),
    ]
    artifacts = {
        "conditioning.csv": _csv_bytes(
            ["path", "c_at_n", "small_and_decreasing"],
            [[k, c_vals[k], bool(joint_flags[k])] for k in range(cfg.paths)],
        ),
    }
    return records, artifacts


def exp_partition_check(cfg: ExperimentConfig):
    records = []
    rows = []
    for dim in (1, 2):
        diam_scale = []
        for cells in (8, 32, 128):
            part = eq_partition(dim, cells)
            areas = part.areas()
            area_err = float(np.max(np.abs(areas - part.cell_area)))
            records.append(
                ResultRecord.check(
                    f"equal_areas_dim{dim}_N{cells}", area_err, 0.0, 1e-10, "le",
                    "closed-form cap/collar areas",
                )
            )
            diam = float(part.cell_diameters().max())
            diam_scale.append(diam * cells ** (1.0 / dim))
            rows.append([dim, cells, area_err, diam])
        ratio = max(abs(s / diam_scale[0] - 1.0) for s in diam_scale)
        records.append(
            ResultRecord.check(
                f"diameter_scaling_dim{dim}", ratio, 0.1, 0.0, "le",
                "diameter * N^{1/dim} stability across refinements",
            )
        )
    artifacts = {"partitions.csv": _csv_bytes(["dim", "cells", "area_error", "max_diameter"], rows)}
    return records, artifacts


# ---------------------------------------------------------------------------
# batched study helpers used by the acceptance suite


def lattice_revisit_fraction(
    field: FieldDistributionSpec, paths: int, n_lo: int, n_hi: int, seed: int,
    ball_radius: float = 2.0,
) -> float:
    """Fraction of walk paths reentering the origin ball on [n_lo, n_hi]."""
    hits = 0
    for p in range(paths):
        path = walk_path(field, n_hi, seed, stream=p)
        hits += int(np.any(path.norms[n_lo - 1 : n_hi] <= ball_radius))
    return hits / paths


def replica_overlap_means(
    field: FieldDistributionSpec,
    params: ModelParams,
    n: int,
    draws: int,
    pairs_per_draw: int,
    chain: ChainConfig,
    seed: int,
) -> np.ndarray:
    """Realized mean overlap for each of ``draws`` disorder realizations.

    All draws run as one vectorized chain ensemble (2 * pairs_per_draw
    independent chains per realization, one latent and one configuration per
    replica), so the cost is a single pass.
    """
    h_list = [generate_disorder(field, n, seed, stream=r) for r in range(draws)]
    stats = [compute_sample_stats(h) for h in h_list]
    means = np.stack([s.mean for s in stats])
    stdevs = np.stack([s.stdev for s in stats])
    cc = 2 * pairs_per_draw
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(30,)))
    kept, _ = run_latent_chains(
        means, stdevs, params, n, replace(chain, chain_count=cc, seed=seed), 1, rng
    )
    latents = kept[0]
    from .overlap import pair_overlaps

    out = np.empty(draws)
    for r in range(draws):
        basis = build_basis(h_list[r])
        lat = latents[r * cc : (r + 1) * cc]
        crng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(31, r)))
        configs = _latents_to_configs(lat, basis, crng)
        out[r] = float(np.mean(pair_overlaps(configs[0::2], configs[1::2])))
    return out


def cluster_dichotomy_study(
    field: FieldDistributionSpec,
    params: ModelParams,
    n: int,
    runs: int,
    chain: ChainConfig,
    seed: int,
    window: int = 16,
    configs_per_run: int = 100,
) -> dict:
    """Tilt magnitudes and pure-state fingerprint matches over disorder runs.

    A run "matches" its pure state when the fingerprint direction aligns with
    the realized walk direction (inner product >= 0.9) and the mean coordinate
    stdev sits within 10% of 1/sqrt(beta).
    """
    _, constants = classify_regime(params, field.second_moments)
    h_list = [generate_disorder(field, n, seed, stream=r) for r in range(runs)]
    stats = [compute_sample_stats(h) for h in h_list]
    means = np.stack([s.mean for s in stats])
    stdevs = np.stack([s.stdev for s in stats])
    cc = chain.chain_count
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(40,)))
    samples_per_chain = max(1, configs_per_run // cc)
    kept, _ = run_latent_chains(
        means, stdevs, params, n, replace(chain, seed=seed), samples_per_chain, rng
    )
    tilt_estimates = np.empty(runs)
    walk_norms = np.empty(runs)
    matches = np.zeros(runs, dtype=bool)
    target_stdev = 1.0 / math.sqrt(params.beta)
    for r in range(runs):
        basis = build_basis(h_list[r])
        lat = kept[:, r * cc : (r + 1) * cc, :].reshape(-1, 2 * params.d)
        crng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(41, r)))
        configs = _latents_to_configs(lat, basis, crng)
        fp = fingerprint_state(
            configs[:, :window, :], h_list[r].values[:window], constants, params,
            latents=lat,
        )
        tilt_estimates[r] = fp.tilt_magnitude if fp.tilt_magnitude is not None else 0.0
        walk = stats[r].walk_sum
        walk_norms[r] = float(np.linalg.norm(walk))
        direction_ok = float(fp.direction @ (walk / np.linalg.norm(walk))) >= 0.9
        stdev_ok = abs(float(fp.stdevs.mean()) / target_stdev - 1.0) <= 0.1
        matches[r] = direction_ok and stdev_ok
    return {
        "tilt_estimates": tilt_estimates,
        "walk_norms": walk_norms,
        "matches": matches,
    }


_RUNNERS = {
    "gibbs_sample": exp_gibbs_sample,
    "overlap_unscaled": exp_overlap_unscaled,
    "overlap_scaled": exp_overlap_scaled,
    "ultrametricity": exp_ultrametricity,
    "metastate_aw": exp_metastate_aw,
    "metastate_ns": exp_metastate_ns,
    "walk_diagnostics": exp_walk_diagnostics,
    "partition_check": exp_partition_check,
}


def run_experiment(cfg: ExperimentConfig, persist: bool = True):
    """Execute one experiment; returns (records, manifest) and writes artifacts."""
    from . import __version__

    if cfg.kind not in _RUNNERS:
        raise ValueError(f"unknown experiment kind {cfg.kind!r}")
    start = time.time()
    try:
        records, artifacts = _RUNNERS[cfg.kind](cfg)
    except Exception as exc:
        raise RuntimeError(f"experiment stage {cfg.kind!r} failed: {exc}") from exc
    manifest = RunManifest(
        config=cfg.to_dict(),
        version=__version__,
        wall_clock_seconds=time.time() - start,
        stage_seeds={"master": cfg.seed},
        result_files={},
    )
    if persist:
        persist_results(records, manifest, artifacts, cfg.out_dir)
    return records, manifest
