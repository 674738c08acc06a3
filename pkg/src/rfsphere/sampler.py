"""Exact finite-volume Gibbs sampling through the latent mixture representation.

A Gibbs configuration is drawn in two stages: a 2d-dimensional latent pair
(x, y) from the mixing density on the open unit ball (random-walk Metropolis
with an angular redraw move that handles the near-degenerate orbit of the
ordered phase), followed by an exact conditional draw on the constraint
sphere (deterministic shift along the field-adapted basis plus a normalized
Gaussian on the orthogonal complement).  The conditional stage is exact at
every finite n; all Monte Carlo error lives in the latent stage and is
surfaced through the chain diagnostics.

A tensor-grid quadrature oracle for the latent density (full 2D grid for
d = 1, reduction to (r, theta, y1) with the perpendicular y-block integrated
in closed form for d = 2) provides ground truth at small n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import OrthonormalBasis, build_basis
from .model import (
    DisorderSample,
    DomainError,
    ModelParams,
    SampleStats,
    compute_sample_stats,
    field_scale_factor,
)

__all__ = [
    "MixtureCoordinate",
    "SpinConfiguration",
    "ChainConfig",
    "SamplerDiagnostics",
    "GibbsDraws",
    "QuadratureTable",
    "QuadratureResolutionError",
    "log_mixture_density",
    "sample_mixture",
    "run_latent_chains",
    "mixture_quadrature_oracle",
    "sample_microcanonical",
    "sample_gibbs",
    "limit_marginal_params",
    "chain_mean_se",
]

ANGULAR_REDRAW_PROB = 0.2
CONVERGENCE_THRESHOLD = 1.1
ADAPT_BLOCK = 50
TARGET_ACCEPTANCE = 0.3
DIAG_MIN_STEPS = 1500  # post-burn-in floor so split-chain ratios see several
DIAG_MAX_CHAINS = 64   # relaxation times of the slow angular coordinate


class QuadratureResolutionError(ValueError):
    """Grid too coarse for the requested latent density."""


@dataclass(frozen=True)
class MixtureCoordinate:
    """Latent point (x, y) strictly inside the unit ball of R^{2d}."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape != y.shape:
            raise ValueError("x and y must have the same dimension")
        if float(x @ x + y @ y) >= 1.0:
            raise DomainError("(x, y) must lie strictly inside the unit ball")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def squared_radius(self) -> float:
        return float(self.x @ self.x + self.y @ self.y)


@dataclass(frozen=True)
class SpinConfiguration:
    """One configuration phi on n sites satisfying the global constraint."""

    phi: np.ndarray  # (n, d)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2:
            raise ValueError("phi must be an (n, d) array")
        n = phi.shape[0]
        if abs(float(np.sum(phi * phi)) / n - 1.0) > 1e-9:
            raise ValueError("configuration violates the spherical constraint")
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class ChainConfig:
    """Random-walk Metropolis settings for the latent stage."""

    proposal_stdev: float | None = None  # None: 0.3 / sqrt(n), adapted in burn-in
    burn_in: int = 1500
    thinning: int = 4
    chain_count: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 1 or self.thinning < 1 or self.chain_count < 1:
            raise ValueError("all chain counts must be positive")


@dataclass(frozen=True)
class SamplerDiagnostics:
    acceptance_rate: float
    ess: np.ndarray  # per latent coordinate
    split_chain_ratio: float
    boundary_rejections: int
    proposal_stdev: float

    @property
    def converged(self) -> bool:
        return self.split_chain_ratio <= CONVERGENCE_THRESHOLD


@dataclass(frozen=True)
class GibbsDraws:
    configurations: np.ndarray  # (count, n, d)
    latents: np.ndarray  # (count, 2d)
    diagnostics: SamplerDiagnostics


def _scaled_field_vectors(stats: SampleStats, params: ModelParams, n: int):
    c = field_scale_factor(params, n)
    return stats.mean * c, stats.stdev * c


def log_mixture_density(
    coordinate: MixtureCoordinate | tuple, stats: SampleStats, params: ModelParams,
    n: int,
) -> float:
    """Unnormalized log density of the latent mixing measure at one point."""
    if isinstance(coordinate, MixtureCoordinate):
        x, y = coordinate.x, coordinate.y
    else:
        x, y = coordinate
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
    if float(x @ x + y @ y) >= 1.0:
        raise DomainError("latent point outside the open ball")
    m, s = _scaled_field_vectors(stats, params, n)
    xy = np.concatenate([x, y])[None, :]
    return float(_log_density_rows(xy, m[None, :], s[None, :], params, n)[0])


def _log_density_rows(
    xy: np.ndarray, mean_rows: np.ndarray, stdev_rows: np.ndarray,
    params: ModelParams, n: int,
) -> np.ndarray:
    """Vectorized log density; mean/stdev rows are already volume-scaled."""
    d = params.d
    beta = params.beta
    x = xy[:, :d]
    y = xy[:, d:]
    sq = np.einsum("ij,ij->i", xy, xy)
    out = np.full(xy.shape[0], -np.inf)
    ok = sq < 1.0
    if np.any(ok):
        gap = 1.0 - sq[ok]
        tilt = (
            0.5 * beta * np.einsum("ij,ij->i", x[ok], x[ok])
            + beta * np.einsum("ij,ij->i", x[ok], mean_rows[ok])
            + beta * np.einsum("ij,ij->i", y[ok], stdev_rows[ok])
            + 0.5 * d * np.log(gap)
        )
        out[ok] = n * tilt - (d + 1) * np.log(gap)
    return out


def _initial_states(
    mean_rows: np.ndarray, stdev_rows: np.ndarray, params: ModelParams, n: int,
    chains: int, rng: np.random.Generator,
) -> np.ndarray:
    """Start chains on the closed-form maximizer orbit (random angles), or at 0."""
    d, beta = params.d, params.beta
    states = np.zeros((chains, 2 * d))
    directions = rng.standard_normal((chains, d))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    if params.scaled:
        # the scaled model orders at beta > d with the orbit at sqrt(1 - d/beta)
        if beta > d:
            states[:, :d] = math.sqrt(1.0 - d / beta) * directions
        return states
    s_norm_sq = np.einsum("ij,ij->i", stdev_rows, stdev_rows)
    ferro = (s_norm_sq < 1.0) & (beta > d / np.maximum(1e-12, 1.0 - s_norm_sq))
    radius = np.sqrt(np.clip(1.0 - d / beta - s_norm_sq, 0.0, None))
    states[:, :d] = np.where(ferro[:, None], radius[:, None] * directions, 0.0)
    states[:, d:] = np.where(ferro[:, None], stdev_rows, 0.0)
    return states


def run_latent_chains(
    mean_targets: np.ndarray,
    stdev_targets: np.ndarray,
    params: ModelParams,
    n: int,
    cfg: ChainConfig,
    samples_per_chain: int,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, SamplerDiagnostics]:
    """Metropolis ensemble over T targets with cfg.chain_count chains each.

    ``mean_targets`` and ``stdev_targets`` are (T, d) unscaled sample
    statistics rows (one target distribution per disorder realization).
    Returns kept samples of shape (samples_per_chain, T * chain_count, 2d).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    mean_targets = np.atleast_2d(np.asarray(mean_targets, dtype=float))
    stdev_targets = np.atleast_2d(np.asarray(stdev_targets, dtype=float))
    t_count, d = mean_targets.shape
    if d != params.d:
        raise ValueError("target rows do not match the spin dimension")
    cc = cfg.chain_count
    chains = t_count * cc
    c = field_scale_factor(params, n)
    mean_rows = np.repeat(mean_targets * c, cc, axis=0)
    stdev_rows = np.repeat(stdev_targets * c, cc, axis=0)

    sigma = cfg.proposal_stdev if cfg.proposal_stdev is not None else 0.3 / math.sqrt(n)
    states = _initial_states(mean_rows, stdev_rows, params, n, chains, rng)
    logp = _log_density_rows(states, mean_rows, stdev_rows, params, n)

    post_steps = max(samples_per_chain * cfg.thinning, DIAG_MIN_STEPS)
    total_steps = cfg.burn_in + post_steps
    kept = np.empty((samples_per_chain, chains, 2 * d))
    kept_idx = 0
    accepted_local = 0
    proposed_local = 0
    boundary = 0
    block_acc = 0
    block_prop = 0

    probe = min(chains, DIAG_MAX_CHAINS)
    s_dirs = stdev_rows[:probe] / np.maximum(
        np.linalg.norm(stdev_rows[:probe], axis=1), 1e-300
    )[:, None]
    m_dirs = mean_rows[:probe] / np.maximum(
        np.linalg.norm(mean_rows[:probe], axis=1), 1e-300
    )[:, None]
    summaries = np.empty((post_steps, probe, 3))

    for step in range(total_steps):
        redraw = rng.random(chains) < ANGULAR_REDRAW_PROB
        proposal = states + sigma * rng.standard_normal((chains, 2 * d))
        if np.any(redraw):
            x = states[redraw, :d]
            radii = np.linalg.norm(x, axis=1)
            fresh = rng.standard_normal((int(redraw.sum()), d))
            fresh /= np.linalg.norm(fresh, axis=1)[:, None]
            proposal[redraw, :d] = radii[:, None] * fresh
            proposal[redraw, d:] = states[redraw, d:]
        new_logp = _log_density_rows(proposal, mean_rows, stdev_rows, params, n)
        accept = np.log(rng.random(chains)) < new_logp - logp
        boundary += int(np.sum(~np.isfinite(new_logp)))
        states[accept] = proposal[accept]
        logp[accept] = new_logp[accept]

        local = ~redraw
        if step >= cfg.burn_in:
            accepted_local += int(np.sum(accept & local))
            proposed_local += int(local.sum())
            offset = step - cfg.burn_in
            if (offset + 1) % cfg.thinning == 0 and kept_idx < samples_per_chain:
                kept[kept_idx] = states
                kept_idx += 1
            head = states[:probe]
            summaries[offset, :, 0] = np.linalg.norm(head[:, :d], axis=1)
            summaries[offset, :, 1] = np.einsum("cd,cd->c", head[:, :d], m_dirs)
            summaries[offset, :, 2] = np.einsum("cd,cd->c", head[:, d:], s_dirs)
        else:
            block_acc += int(np.sum(accept & local))
            block_prop += int(local.sum())
            if (step + 1) % ADAPT_BLOCK == 0 and block_prop > 0:
                rate = block_acc / block_prop
                sigma *= math.exp(0.3 * (rate - TARGET_ACCEPTANCE))
                block_acc = 0
                block_prop = 0

    acceptance = accepted_local / proposed_local if proposed_local else 0.0
    diag = _diagnostics(
        kept, summaries, cc, acceptance, boundary, sigma
    )
    return kept, diag


def _split_rhat(series: np.ndarray) -> float:
    """Split-chain ratio for one scalar statistic, series of shape (S, chains)."""
    s, chains = series.shape
    if s < 4:
        return 1.0
    half = s // 2
    parts = np.concatenate([series[:half], series[half : 2 * half]], axis=1)
    means = parts.mean(axis=0)
    variances = parts.var(axis=0, ddof=1)
    w = variances.mean()
    if w <= 1e-300:
        return 1.0
    b = half * means.var(ddof=1)
    var_plus = (half - 1) / half * w + b / half
    return float(math.sqrt(var_plus / w))


def _ess_series(series: np.ndarray, max_lag: int = 200) -> float:
    """Effective sample size of one chain's scalar series."""
    s = series - series.mean()
    n = s.size
    var = float(s @ s) / n
    if var <= 1e-300:
        return float(n)
    rho_sum = 0.0
    for lag in range(1, min(n - 1, max_lag)):
        rho = float(s[:-lag] @ s[lag:]) / (n * var)
        if rho < 0.05:
            break
        rho_sum += rho
    return n / (1.0 + 2.0 * rho_sum)


def _diagnostics(kept, summaries, cc, acceptance, boundary, sigma) -> SamplerDiagnostics:
    s_total, chains, width = kept.shape
    steps, probe, _ = summaries.shape

    # split-chain ratio on the per-step summary statistics, grouped by target
    ratio = 1.0
    stride = max(1, steps // 400)
    thin = summaries[::stride]
    groups = max(1, probe // cc)
    for stat_idx in range(3):
        for t in range(groups):
            block = thin[:, t * cc : (t + 1) * cc, stat_idx]
            ratio = max(ratio, _split_rhat(block))

    # per-coordinate ESS from the kept samples of a handful of chains
    ess = np.empty(width)
    n_probe = min(chains, 8)
    for coord in range(width):
        vals = [_ess_series(kept[:, c, coord]) for c in range(n_probe)]
        ess[coord] = float(np.mean(vals)) * chains

    return SamplerDiagnostics(
        acceptance_rate=acceptance,
        ess=ess,
        split_chain_ratio=ratio,
        boundary_rejections=boundary,
        proposal_stdev=sigma,
    )


def sample_mixture(
    stats: SampleStats, params: ModelParams, n: int, cfg: ChainConfig,
    count: int | None = None,
) -> tuple[np.ndarray, SamplerDiagnostics]:
    """Latent samples (count, 2d) for one disorder realization, plus diagnostics."""
    per_chain = max(1, math.ceil((count or cfg.chain_count) / cfg.chain_count))
    rng = np.random.default_rng(cfg.seed)
    kept, diag = run_latent_chains(
        stats.mean[None, :], stats.stdev[None, :], params, n, cfg, per_chain, rng
    )
    flat = kept.reshape(-1, kept.shape[2])
    if count is not None:
        flat = flat[:count]
    return flat, diag


# ---------------------------------------------------------------------------
# quadrature oracle


@dataclass(frozen=True)
class QuadratureTable:
    """Normalized tensor-grid table of the latent density with moments.

    For d = 1 the grid lives on (x, y); for d = 2 on the reduced coordinates
    (r, theta, y1) in the frames spanned by the mean and stdev directions,
    with the perpendicular y-block integrated in closed form.
    """

    kind: str  # "full2d" or "reduced3d"
    points: np.ndarray  # (P, 2) or (P, 3)
    weights: np.ndarray  # (P,), sums to 1
    moments: dict
    mean_direction: np.ndarray  # frame vector for x (d,)
    stdev_direction: np.ndarray  # frame vector for y (d,)
    error_estimate: float

    def mass_where(self, mask: np.ndarray) -> float:
        return float(self.weights[mask].sum())


def _gl(npts: int, lo: float, hi: float):
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo), 0.5 * (hi - lo) * weights


def _quad_d1(stats, params, n, res):
    m, s = _scaled_field_vectors(stats, params, n)
    beta = params.beta
    xs, wx = _gl(res, -1.0, 1.0)
    ys, wy = _gl(res, -1.0, 1.0)
    xg, yg = np.meshgrid(xs, ys, indexing="ij")
    wg = np.outer(wx, wy)
    sq = xg**2 + yg**2
    ok = sq < 1.0
    logw = np.full_like(xg, -np.inf)
    gap = 1.0 - sq[ok]
    logw[ok] = (
        n * (0.5 * beta * xg[ok] ** 2 + beta * m[0] * xg[ok] + beta * s[0] * yg[ok])
        + (0.5 * n - 2.0) * np.log(gap)
    )
    logw[ok] += np.log(wg[ok])
    top = logw[ok].max()
    weights = np.zeros_like(xg)
    weights[ok] = np.exp(logw[ok] - top)
    weights /= weights.sum()
    pts = np.column_stack([xg.ravel(), yg.ravel()])
    w = weights.ravel()
    moments = {
        "x_par": float(w @ pts[:, 0]),
        "x_par_sq": float(w @ pts[:, 0] ** 2),
        "x_perp_sq": 0.0,
        "x_abs": float(w @ np.abs(pts[:, 0])),
        "x_norm": float(w @ np.abs(pts[:, 0])),
        "y_par": float(w @ pts[:, 1]),
        "y_par_sq": float(w @ pts[:, 1] ** 2),
        "y_perp_sq": 0.0,
    }
    return pts, w, moments


def _quad_d2(stats, params, n, res):
    m, s = _scaled_field_vectors(stats, params, n)
    beta = params.beta
    m_norm = float(np.linalg.norm(m))
    s_norm = float(np.linalg.norm(s))
    rs, wr = _gl(res, 0.0, 1.0)
    ths, wth = _gl(res, 0.0, math.pi)
    y1s, wy = _gl(res, -1.0, 1.0)
    rg, tg, yg = np.meshgrid(rs, ths, y1s, indexing="ij")
    wg = wr[:, None, None] * wth[None, :, None] * wy[None, None, :]
    sq = rg**2 + yg**2
    ok = sq < 1.0
    power = n - 3.0 + 0.5  # n d/2 - (d+1) + (d-1)/2 at d = 2
    logw = np.full_like(rg, -np.inf)
    gap = 1.0 - sq[ok]
    logw[ok] = (
        power * np.log(gap)
        + n * (0.5 * beta * rg[ok] ** 2 + beta * m_norm * rg[ok] * np.cos(tg[ok])
               + beta * s_norm * yg[ok])
        + np.log(rg[ok])
    )
    logw[ok] += np.log(wg[ok])
    top = logw[ok].max()
    weights = np.zeros_like(rg)
    weights[ok] = np.exp(logw[ok] - top)
    weights /= weights.sum()

    pts = np.column_stack([rg.ravel(), tg.ravel(), yg.ravel()])
    w = weights.ravel()
    r, th, y1 = pts[:, 0], pts[:, 1], pts[:, 2]
    perp_factor = 1.0 / (2.0 * (n - 3.0) + 3.0)
    moments = {
        "x_par": float(w @ (r * np.cos(th))),
        "x_par_sq": float(w @ (r * np.cos(th)) ** 2),
        "x_perp_sq": float(w @ (r * np.sin(th)) ** 2),
        "x_norm": float(w @ r),
        "x_norm_sq": float(w @ r**2),
        "y_par": float(w @ y1),
        "y_par_sq": float(w @ y1**2),
        "y_perp_sq": float(w @ ((1.0 - r**2 - y1**2) * perp_factor)),
    }
    return pts, w, moments


def mixture_quadrature_oracle(
    stats: SampleStats, params: ModelParams, n: int, resolution: int = 192,
) -> QuadratureTable:
    """Ground-truth latent density table by tensor-grid quadrature (d <= 2)."""
    d = params.d
    if d > 2:
        raise ValueError("quadrature oracle implemented for d <= 2")
    if d == 1 and resolution > 256:
        raise ValueError("resolution capped at 256 per axis for d = 1")
    builder = _quad_d1 if d == 1 else _quad_d2
    pts, w, moments = builder(stats, params, n, resolution)
    _, _, coarse = builder(stats, params, n, max(16, resolution // 2))
    err = max(abs(moments[k] - coarse[k]) for k in moments)
    if err > 1e-4:
        raise QuadratureResolutionError(
            f"estimated quadrature error {err:.2e} exceeds 1e-4; raise the resolution"
        )
    m_norm = np.linalg.norm(stats.mean)
    mean_dir = stats.mean / m_norm if m_norm > 0 else np.eye(d)[0]
    s_norm = np.linalg.norm(stats.stdev)
    stdev_dir = stats.stdev / s_norm if s_norm > 0 else np.eye(d)[min(1, d - 1)]
    return QuadratureTable(
        kind="full2d" if d == 1 else "reduced3d",
        points=pts, weights=w, moments=moments,
        mean_direction=mean_dir, stdev_direction=stdev_dir, error_estimate=err,
    )


# ---------------------------------------------------------------------------
# conditional stage and composition


def sample_microcanonical(
    coordinate: MixtureCoordinate,
    basis: OrthonormalBasis,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draws (count, n, d) from the shifted constraint-sphere measure."""
    n, d = basis.n, basis.d
    if n < 3:
        raise ValueError("the shifted sphere measure needs n >= 3")
    x, y = coordinate.x, coordinate.y
    shift = math.sqrt(n) * (basis.u[:, None] * x[None, :] + basis.v * y[None, :])
    radius = math.sqrt(n) * math.sqrt(max(0.0, 1.0 - coordinate.squared_radius))
    coeffs = rng.standard_normal((count, n, d))
    coeffs[:, :2, :] = 0.0
    norms = np.sqrt(np.einsum("knd,knd->k", coeffs, coeffs))
    coeffs /= norms[:, None, None]
    gaussian_part = basis.complement_from_coefficients(coeffs)
    return shift[None, :, :] + radius * gaussian_part


def _latents_to_configs(
    latents: np.ndarray, basis: OrthonormalBasis, rng: np.random.Generator,
    chunk: int = 256,
) -> np.ndarray:
    """One configuration per latent row, drawn in memory-bounded chunks."""
    if basis.n < 3:
        raise ValueError("the shifted sphere measure needs n >= 3")
    count = latents.shape[0]
    d = basis.d
    out = np.empty((count, basis.n, d))
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        block = latents[start:stop]
        coeffs = rng.standard_normal((stop - start, basis.n, d))
        coeffs[:, :2, :] = 0.0
        norms = np.sqrt(np.einsum("knd,knd->k", coeffs, coeffs))
        coeffs /= norms[:, None, None]
        gaussian_part = basis.complement_from_coefficients(coeffs)
        x = block[:, :d]
        y = block[:, d:]
        shifts = math.sqrt(basis.n) * (
            basis.u[None, :, None] * x[:, None, :] + basis.v[None, :, :] * y[:, None, :]
        )
        radii = math.sqrt(basis.n) * np.sqrt(
            np.clip(1.0 - np.einsum("kj,kj->k", block, block), 0.0, None)
        )
        out[start:stop] = shifts + radii[:, None, None] * gaussian_part
    return out


def sample_gibbs(
    h: DisorderSample, params: ModelParams, cfg: ChainConfig, count: int,
) -> GibbsDraws:
    """Finite-volume Gibbs draws: latent chain then exact conditional draws."""
    stats = compute_sample_stats(h)
    basis = build_basis(h)
    latents, diag = sample_mixture(stats, params, h.n, cfg, count)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xC0FFEE,)))
    configs = _latents_to_configs(latents, basis, rng)
    return GibbsDraws(configurations=configs, latents=latents, diagnostics=diag)


def limit_marginal_params(
    coordinate: MixtureCoordinate,
    window_field: np.ndarray,
    limit_mean: np.ndarray,
    limit_stdev: np.ndarray,
    d: int,
) -> tuple[np.ndarray, float]:
    """Limiting single-site marginal mean matrix and common stdev on a window."""
    field = np.atleast_2d(np.asarray(window_field, dtype=float))
    m = np.broadcast_to(np.asarray(limit_mean, dtype=float), (d,))
    s = np.broadcast_to(np.asarray(limit_stdev, dtype=float), (d,))
    means = coordinate.x[None, :] + coordinate.y[None, :] * (field - m[None, :]) / s[None, :]
    stdev = math.sqrt((1.0 - coordinate.squared_radius) / d)
    return means, stdev


def chain_mean_se(kept: np.ndarray) -> tuple[float, float]:
    """Mean and standard error of a scalar statistic from (S, chains) samples.

    Chains are independent, so the SE comes from the spread of chain means.
    """
    chain_means = kept.mean(axis=0)
    c = chain_means.size
    return float(chain_means.mean()), float(chain_means.std(ddof=1) / math.sqrt(c))
