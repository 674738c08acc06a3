"""Disorder generation, field partial sums, and Brownian path functionals.

All randomness flows through ``numpy.random.Generator`` objects created from
a 64-bit master seed with counter-based stream splitting: stream k of seed s
is ``default_rng(SeedSequence(s, spawn_key=(k,)))``.  Identical (spec, size,
seed) triples therefore produce bit-identical output on any worker layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DisorderSample

__all__ = [
    "FieldDistributionSpec",
    "WalkPath",
    "BrownianPath",
    "stream_rng",
    "generate_disorder",
    "walk_path",
    "recurrence_statistic",
    "brownian_occupation",
    "brownian_occupation_mean",
]


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic RNG stream ``stream`` derived from a master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class FieldDistributionSpec:
    """Centered i.i.d. field distribution with declared second moments.

    kinds:
      * ``two_point``: each component j is +-a_j with equal probability,
      * ``gaussian``: rows are N(0, Sigma),
      * ``uniform_box``: component j uniform on [-w_j, w_j].
    """

    kind: str
    d: int
    two_point_a: np.ndarray | None = None  # (d,)
    sigma: np.ndarray | None = None  # (d, d)
    half_widths: np.ndarray | None = None  # (d,)

    def __post_init__(self):
        if self.kind not in ("two_point", "gaussian", "uniform_box"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        conv = {
            "two_point_a": self.two_point_a,
            "sigma": self.sigma,
            "half_widths": self.half_widths,
        }
        for name, v in conv.items():
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        if self.kind == "two_point" and self.two_point_a is None:
            raise ValueError("two_point needs per-component amplitudes")
        if self.kind == "gaussian":
            if self.sigma is None or self.sigma.shape != (self.d, self.d):
                raise ValueError("gaussian needs a (d, d) covariance")
            if np.any(np.linalg.eigvalsh(self.sigma) <= 0):
                raise ValueError("covariance must be positive definite")
        if self.kind == "uniform_box" and self.half_widths is None:
            raise ValueError("uniform_box needs half widths")

    @property
    def covariance(self) -> np.ndarray:
        if self.kind == "two_point":
            return np.diag(self.two_point_a**2)
        if self.kind == "gaussian":
            return self.sigma.copy()
        return np.diag(self.half_widths**2 / 3.0)

    @property
    def second_moments(self) -> np.ndarray:
        """Per-component E h_j^2 (the limiting s_j^2)."""
        return np.diag(self.covariance).copy()

    @property
    def total_second_moment(self) -> float:
        return float(np.trace(self.covariance))

    @property
    def is_lattice(self) -> bool:
        return self.kind == "two_point"

    def sample_rows(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "two_point":
            signs = rng.integers(0, 2, size=(n, self.d)) * 2 - 1
            return signs * self.two_point_a
        if self.kind == "gaussian":
            chol = np.linalg.cholesky(self.sigma)
            return rng.standard_normal((n, self.d)) @ chol.T
        return rng.uniform(-1.0, 1.0, size=(n, self.d)) * self.half_widths


@dataclass(frozen=True)
class WalkPath:
    """Prefix sums S_1..S_N of the field rows, with derived streams."""

    prefix: np.ndarray  # (N, d)
    seed: int

    @property
    def big_n(self) -> int:
        return self.prefix.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.prefix, axis=1)

    @property
    def scaled(self) -> np.ndarray:
        """S_n / sqrt(n)."""
        n = np.arange(1, self.big_n + 1, dtype=float)
        return self.prefix / np.sqrt(n)[:, None]

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit projections S_n / ||S_n|| and a validity mask (S_n != 0)."""
        norms = self.norms
        ok = norms > 0
        out = np.zeros_like(self.prefix)
        out[ok] = self.prefix[ok] / norms[ok, None]
        return out, ok


@dataclass(frozen=True)
class BrownianPath:
    """Path values at a uniform grid 0 = t_0 < ... < t_M = 1, B_0 = 0."""

    times: np.ndarray  # (M + 1,)
    values: np.ndarray  # (M + 1, d)


def generate_disorder(
    spec: FieldDistributionSpec, n: int, seed: int, stream: int = 0
) -> DisorderSample:
    """n i.i.d. field rows; bit-deterministic given (spec, n, seed, stream)."""
    rng = stream_rng(seed, stream)
    return DisorderSample(values=spec.sample_rows(n, rng), spec=spec)


def walk_path(
    spec: FieldDistributionSpec, big_n: int, seed: int, stream: int = 0
) -> WalkPath:
    """Partial-sum path of the same rows generate_disorder would produce."""
    if big_n < 1:
        raise ValueError("need at least one step")
    rng = stream_rng(seed, stream)
    rows = spec.sample_rows(big_n, rng)
    return WalkPath(prefix=np.cumsum(rows, axis=0), seed=seed)


def recurrence_statistic(path: WalkPath) -> dict:
    """Fraction of volumes with ||S_n|| below the conditioning threshold.

    C_N = (1/N) sum_{n<=N} 1(||S_n|| <= n^{1/2 - 1/(2d)}), reported at the
    half path and the full path together with the decay ratio between them.
    """
    d = path.prefix.shape[1]
    if d < 2:
        raise ValueError("the conditioning statistic is defined for d >= 2")
    big_n = path.big_n
    n = np.arange(1, big_n + 1, dtype=float)
    thresholds = n ** (0.5 - 0.5 / d)
    inside = path.norms <= thresholds
    cumulative = np.cumsum(inside)
    c_half = cumulative[big_n // 2 - 1] / (big_n // 2)
    c_full = cumulative[-1] / big_n
    ratio = c_full / c_half if c_half > 0 else 0.0
    return {"c_half": float(c_half), "c_full": float(c_full), "decay_ratio": float(ratio)}


def brownian_path(
    sigma: np.ndarray, steps: int, seed: int, stream: int = 0
) -> BrownianPath:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    rng = stream_rng(seed, stream)
    dt = 1.0 / steps
    chol = np.linalg.cholesky(sigma)
    increments = rng.standard_normal((steps, d)) @ chol.T * math.sqrt(dt)
    values = np.vstack([np.zeros((1, d)), np.cumsum(increments, axis=0)])
    return BrownianPath(times=np.linspace(0.0, 1.0, steps + 1), values=values)


def brownian_occupation_mean(
    sigma: np.ndarray, steps: int, partition, seed: int, paths: int,
    chunk: int = 2_000_000,
) -> dict:
    """Vectorized occupation over many independent paths.

    Returns the per-path positive fractions (first component) and, when a
    partition is supplied, the mean occupation vector across paths.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    chol = np.linalg.cholesky(sigma)
    dt = 1.0 / steps
    block = max(1, int(chunk // max(1, steps * d)))
    fractions = np.empty(paths)
    occupation = np.zeros(partition.num_cells) if partition is not None else None
    done = 0
    stream = 0
    while done < paths:
        take = min(block, paths - done)
        rng = stream_rng(seed, 50_000 + stream)
        incr = rng.standard_normal((take, steps, d)) @ chol.T * math.sqrt(dt)
        values = np.cumsum(incr, axis=1)  # B at t_1..t_M
        fractions[done : done + take] = np.mean(values[:, :, 0] > 0, axis=1)
        if partition is not None:
            from .measure import cell_histogram

            flat = values.reshape(-1, d)
            dirs = flat / np.linalg.norm(flat, axis=1)[:, None]
            for k in range(take):
                hist = cell_histogram(dirs[k * steps : (k + 1) * steps], partition)
                occupation += hist.fractions
        done += take
        stream += 1
    out = {"positive_fractions": fractions}
    if partition is not None:
        out["occupation"] = occupation / paths
    return out


def brownian_occupation(
    sigma: np.ndarray, steps: int, partition, seed: int, stream: int = 0
) -> dict:
    """Grid approximation of the occupation of the projected path.

    Time is split into ``steps`` equal intervals; each interval is assigned
    the cell of the projected path value at its right endpoint (the left
    endpoint of the first interval is B_0 = 0, whose projection is
    undefined).  For d = 1 the positive time fraction is returned instead
    of a cell vector.
    """
    if steps < 1000:
        raise ValueError("need at least 1000 grid steps")
    path = brownian_path(sigma, steps, seed, stream)
    pts = path.values[1:]  # skip B_0 = 0
    d = pts.shape[1]
    if d == 1:
        positive = float(np.mean(pts[:, 0] > 0))
        return {"positive_fraction": positive}
    from .measure import cell_histogram

    dirs = pts / np.linalg.norm(pts, axis=1)[:, None]
    hist = cell_histogram(dirs, partition)
    return {
        "occupation": hist.counts / hist.total,
        "positive_fraction": float(np.mean(pts[:, 0] > 0)),
    }
