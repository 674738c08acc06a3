"""Replica overlap statistics on shared disorder, with limiting comparators.

Replicas are independent Gibbs draws at identical parameters and identical
field realization; each replica consumes its own latent chain so that the
pair is conditionally independent given the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .limits import OverlapLawSpec, TiltedSphereLaw, sample_gamma
from .measure import EmpiricalLaw1D
from .model import DisorderSample, ModelParams, compute_sample_stats
from .basis import build_basis
from .sampler import ChainConfig, SamplerDiagnostics, _latents_to_configs, run_latent_chains

__all__ = [
    "ReplicaBatch",
    "OverlapExperimentResult",
    "overlap_of_pair",
    "pair_overlaps",
    "overlap_experiment",
    "predicted_overlap_limit",
    "ultrametricity_rate",
]


@dataclass(frozen=True)
class ReplicaBatch:
    """Independent configurations sharing one field realization."""

    disorder: DisorderSample
    configurations: np.ndarray  # (replicas, n, d)

    def __post_init__(self):
        if self.configurations.shape[1:] != self.disorder.values.shape:
            raise ValueError("replicas must live on the disorder's sites")


def overlap_of_pair(phi_a: np.ndarray, phi_b: np.ndarray) -> float:
    """Normalized replica inner product (1/n) sum_i <phi_a(i), phi_b(i)>."""
    phi_a = np.asarray(phi_a, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    if phi_a.shape != phi_b.shape:
        raise ValueError("replica shapes differ")
    return float(np.sum(phi_a * phi_b)) / phi_a.shape[0]


def pair_overlaps(batch_a: np.ndarray, batch_b: np.ndarray) -> np.ndarray:
    """Row-wise overlaps of two stacks of configurations (k, n, d)."""
    return np.einsum("knd,knd->k", batch_a, batch_b) / batch_a.shape[1]


def predicted_overlap_limit(params: ModelParams, spec_second_moments) -> float:
    """Deterministic overlap limit of the non-scaled model, continuous across
    the transition: max(1 - d/beta, ||s||^2)."""
    if params.scaled:
        raise ValueError("the deterministic limit applies to the non-scaled model")
    s_norm_sq = float(np.sum(np.asarray(spec_second_moments, dtype=float)))
    return max(1.0 - params.d / params.beta, s_norm_sq)


@dataclass(frozen=True)
class OverlapExperimentResult:
    law: EmpiricalLaw1D
    realized_radial: float  # ||S_n|| / sqrt(n) of the shared disorder
    comparator: OverlapLawSpec | float
    diagnostics: SamplerDiagnostics
    max_constraint_violation: float
    config_count: int


def overlap_experiment(
    h: DisorderSample,
    params: ModelParams,
    pairs: int,
    cfg: ChainConfig,
    scaled_r_star: float | None = None,
) -> OverlapExperimentResult:
    """Empirical overlap law of Gibbs replica pairs on shared disorder.

    Returns the law together with the model comparator: the deterministic
    point mass for the non-scaled model, or the radial overlap family at the
    realized ||S_n|| / sqrt(n) for the scaled model.
    """
    n, d = h.n, h.d
    stats = compute_sample_stats(h)
    basis = build_basis(h)
    replica_cfg = ChainConfig(
        proposal_stdev=cfg.proposal_stdev, burn_in=cfg.burn_in, thinning=cfg.thinning,
        chain_count=2 * pairs, seed=cfg.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    kept, diag = run_latent_chains(
        stats.mean[None, :], stats.stdev[None, :], params, n, replica_cfg, 1, rng
    )
    latents = kept[0]  # (2 * pairs, 2d)
    config_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
    overlaps = np.empty(pairs)
    max_violation = 0.0
    chunk = max(1, int(2e6 // max(1, n)))
    for start in range(0, pairs, chunk):
        stop = min(pairs, start + chunk)
        block = _latents_to_configs(latents[2 * start : 2 * stop], basis, config_rng)
        constraint = np.einsum("knd,knd->k", block, block) / n
        max_violation = max(max_violation, float(np.max(np.abs(constraint - 1.0))))
        overlaps[start:stop] = pair_overlaps(block[0::2], block[1::2])
    law = EmpiricalLaw1D.from_samples(overlaps)

    radial = float(np.linalg.norm(stats.walk_sum)) / math.sqrt(n)
    if params.scaled:
        r_star = (
            scaled_r_star
            if scaled_r_star is not None
            else math.sqrt(max(0.0, 1.0 - d / params.beta))
        )
        comparator = OverlapLawSpec(radial=radial, d=d, beta=params.beta, r_star=r_star)
    else:
        comparator = predicted_overlap_limit(params, stats.stdev**2)
    return OverlapExperimentResult(
        law=law, realized_radial=radial, comparator=comparator, diagnostics=diag,
        max_constraint_violation=max_violation, config_count=2 * pairs,
    )


def ultrametricity_rate(
    law: TiltedSphereLaw, triples: int, rng: np.random.Generator
) -> float:
    """Empirical probability that q_ac < min(q_ab, q_bc) for i.i.d. directions.

    The squared-radius prefactor of the overlap cancels from the comparison,
    so the rate only involves the pairwise inner products of directions.
    """
    if triples < 1000:
        raise ValueError("need at least 1000 triples")
    a = sample_gamma(law, triples, rng)
    b = sample_gamma(law, triples, rng)
    c = sample_gamma(law, triples, rng)
    q_ab = np.einsum("ij,ij->i", a, b)
    q_bc = np.einsum("ij,ij->i", b, c)
    q_ac = np.einsum("ij,ij->i", a, c)
    return float(np.mean(q_ac < np.minimum(q_ab, q_bc)))
