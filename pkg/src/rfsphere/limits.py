"""Limiting objects: pure product states, tilted sphere laws, and overlap laws.

The pure state magnetized in direction Omega is an independent Gaussian
product over sites; the tilted sphere law gamma^z weights directions by
exp(beta r* <z, Omega>); the overlap family rho^R is the pushforward of two
independent gamma^{R e1} directions under (r*)^2 <Omega^a, Omega^b>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .basis import householder_matrix
from .measure import EmpiricalLaw1D
from .model import CriticalConstants, ModelParams

__all__ = [
    "PureStateSpec",
    "TiltedSphereLaw",
    "OverlapLawSpec",
    "RhoTable",
    "sample_pure_state",
    "sample_gamma",
    "sample_tilted_mixture",
    "rho_law",
    "rho_mean",
    "rho_mean_d1",
]


@dataclass(frozen=True)
class PureStateSpec:
    """Product-state parameters: direction, critical constants, inverse temperature."""

    omega: np.ndarray  # unit d-vector
    constants: CriticalConstants
    beta: float
    scaled: bool = False  # scaled model: no local field shift

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if abs(float(om @ om) - 1.0) > 1e-12:
            raise ValueError("omega must be a unit vector")
        object.__setattr__(self, "omega", om)

    @property
    def coordinate_stdev(self) -> float:
        return 1.0 / math.sqrt(self.beta)


@dataclass(frozen=True)
class TiltedSphereLaw:
    """Sphere law with density proportional to exp(beta r* <z, Omega>)."""

    z: np.ndarray
    beta: float
    r_star: float

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        object.__setattr__(self, "z", z)
        if self.kappa < 0:
            raise ValueError("effective concentration must be nonnegative")

    @property
    def d(self) -> int:
        return self.z.shape[0]

    @property
    def kappa(self) -> float:
        return self.beta * self.r_star * float(np.linalg.norm(self.z))

    @property
    def pole(self) -> np.ndarray:
        norm = float(np.linalg.norm(self.z))
        return self.z / norm if norm > 0 else np.eye(self.d)[0]


@dataclass(frozen=True)
class OverlapLawSpec:
    """Parameters of the overlap family rho^R (direction fixed to e1)."""

    radial: float  # R = ||z||
    d: int
    beta: float
    r_star: float

    def __post_init__(self):
        if self.radial < 0:
            raise ValueError("R must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.beta * self.r_star * self.radial

    @property
    def support(self) -> tuple:
        q = self.r_star**2
        return (-q, q)

    @property
    def law(self) -> TiltedSphereLaw:
        z = self.radial * np.eye(self.d)[0]
        return TiltedSphereLaw(z=z, beta=self.beta, r_star=self.r_star)


def sample_pure_state(
    spec: PureStateSpec, window_field: np.ndarray, count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Independent Gaussian draws (count, w, d) of the pure state on a window."""
    field = np.atleast_2d(np.asarray(window_field, dtype=float))
    w, d = field.shape
    mean = spec.constants.r_star * spec.omega[None, :]
    if not spec.scaled:
        mean = mean + field
    noise = rng.standard_normal((count, w, d)) * spec.coordinate_stdev
    return mean[None, :, :] + noise


def _uniform_sphere(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return (rng.integers(0, 2, size=(count, 1)) * 2.0 - 1.0)
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1)[:, None]


def _gamma_angles_d2(kappa: float, count: int, rng: np.random.Generator,
                     grid: int = 4096) -> np.ndarray:
    """Inverse-CDF sampling of the angle to the pole for the tilted circle law."""
    alpha = np.linspace(-math.pi, math.pi, grid + 1)
    log_pdf = kappa * (np.cos(alpha) - 1.0)
    pdf = np.exp(log_pdf)
    increments = 0.5 * (pdf[1:] + pdf[:-1])
    cdf = np.concatenate([[0.0], np.cumsum(increments)])
    cdf /= cdf[-1]
    u = rng.random(count)
    return np.interp(u, cdf, alpha)


def _gamma_cos_d3(kappa: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact inverse-CDF of cos(theta) under the tilted density exp(kappa t)."""
    u = rng.random(count)
    with np.errstate(divide="ignore"):
        mix = np.logaddexp(np.log(u), np.log1p(-u) - 2.0 * kappa)
    return 1.0 + mix / kappa


def _wood_cos(kappa: float, d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampling of the pole-cosine for d > 3."""
    dim = d - 1
    b = dim / (math.sqrt(4.0 * kappa**2 + dim**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * math.log(1.0 - x0 * x0)
    out = np.empty(count)
    filled = 0
    while filled < count:
        todo = count - filled
        z = rng.beta(dim / 2.0, dim / 2.0, size=todo)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        accept = kappa * w + dim * np.log1p(-x0 * w) - c >= np.log(rng.random(todo))
        good = w[accept]
        out[filled : filled + good.size] = good
        filled += good.size
    return out


def sample_gamma(
    law: TiltedSphereLaw, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Unit vectors (count, d) from the tilted sphere law.

    d = 1 uses the exact two-point law, d = 2 grid inverse-CDF on the angle,
    d = 3 exact inversion of the tilted cosine; higher d falls back to
    rejection sampling of the pole-cosine.
    """
    d = law.d
    kappa = law.kappa
    if kappa == 0.0:
        return _uniform_sphere(count, d, rng)
    pole = law.pole
    if d == 1:
        p_plus = 1.0 / (1.0 + math.exp(-2.0 * kappa))
        signs = np.where(rng.random(count) < p_plus, 1.0, -1.0)
        return signs[:, None] * pole[None, :]
    if d == 2:
        alpha = _gamma_angles_d2(kappa, count, rng)
        base = math.atan2(pole[1], pole[0])
        ang = base + alpha
        return np.column_stack([np.cos(ang), np.sin(ang)])
    t = _gamma_cos_d3(kappa, count, rng) if d == 3 else _wood_cos(kappa, d, count, rng)
    t = np.clip(t, -1.0, 1.0)
    tangent = rng.standard_normal((count, d))
    tangent -= np.outer(tangent @ pole, pole)
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    return t[:, None] * pole[None, :] + np.sqrt(1.0 - t * t)[:, None] * tangent


def sample_tilted_mixture(
    z: np.ndarray,
    constants: CriticalConstants,
    window_field: np.ndarray,
    params: ModelParams,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Hierarchical draw: direction from gamma^z, then the pure state there."""
    law = TiltedSphereLaw(z=z, beta=params.beta, r_star=constants.r_star)
    omegas = sample_gamma(law, count, rng)
    field = np.atleast_2d(np.asarray(window_field, dtype=float))
    means = constants.r_star * omegas[:, None, :]
    if not params.scaled:
        means = means + field[None, :, :]
    noise = rng.standard_normal((count, field.shape[0], params.d)) / math.sqrt(params.beta)
    return means + noise


# ---------------------------------------------------------------------------
# overlap law rho^R


@dataclass(frozen=True)
class RhoTable:
    """Gridded density of the overlap law (d = 2 quadrature route).

    Quantiles are produced through the angle-difference representation, which
    avoids the inverse-square-root edge singularities of the q-density.
    """

    q: np.ndarray
    density: np.ndarray
    mean: float
    q_max: float
    angle_grid: np.ndarray  # angular distances in [0, pi]
    angle_cdf: np.ndarray  # distribution of the angular distance

    def quantile_samples(self, count: int) -> np.ndarray:
        """Deterministic quantile representatives of the gridded law."""
        u = (np.arange(count) + 0.5) / count
        # P(q <= t) = 1 - F_dist(arccos(t / q_max)); invert through the angle
        angles = np.interp(1.0 - u, self.angle_cdf, self.angle_grid)
        return self.q_max * np.cos(angles)


def rho_mean_d1(spec: OverlapLawSpec) -> float:
    """Closed-form mean of the overlap law for scalar spins."""
    return spec.r_star**2 * math.tanh(spec.kappa) ** 2


def rho_mean(spec: OverlapLawSpec) -> float:
    """Mean overlap (r*)^2 A_d(kappa)^2 via the mean resultant length."""
    kappa = spec.kappa
    if spec.d == 1:
        return rho_mean_d1(spec)
    if kappa == 0.0:
        return 0.0
    if spec.d == 2:
        a = float(special.i1e(kappa) / special.i0e(kappa))
    elif spec.d == 3:
        a = 1.0 / math.tanh(kappa) - 1.0 / kappa
    else:
        raise ValueError("closed-form mean implemented for d <= 3")
    return spec.r_star**2 * a * a


def _rho_quadrature_d2(spec: OverlapLawSpec, grid: int = 4096,
                       out_points: int = 2001) -> RhoTable:
    """Density of q = (r*)^2 cos(angle difference) for two tilted circle draws."""
    kappa = spec.kappa
    step = 2.0 * math.pi / grid
    alpha = np.arange(grid) * step
    pdf = np.exp(kappa * (np.cos(alpha) - 1.0))
    pdf /= pdf.sum() * step
    spectrum = np.fft.rfft(pdf)
    # circular autocorrelation: density of the signed difference at lag k * step
    lag_density = np.fft.irfft(spectrum * np.conj(spectrum), n=grid).real * step

    q_sq = spec.r_star**2
    h = 2.0 * q_sq / out_points
    qs = -q_sq + h * (np.arange(out_points) + 0.5)
    inner = np.clip(qs / q_sq, -1.0, 1.0)
    d_angle = np.arccos(inner)
    f_at = np.interp(d_angle, alpha, lag_density, period=2.0 * math.pi)
    dens = 2.0 * f_at / (q_sq * np.sqrt(1.0 - inner**2))

    # angular-distance distribution for quantiles: density 2 * lag_density on [0, pi]
    half = grid // 2
    dist_grid = alpha[: half + 1]
    dist_density = 2.0 * lag_density[: half + 1]
    increments = 0.5 * (dist_density[1:] + dist_density[:-1]) * step
    dist_cdf = np.concatenate([[0.0], np.cumsum(increments)])
    dist_cdf /= dist_cdf[-1]
    return RhoTable(
        q=qs, density=dens, mean=rho_mean(spec), q_max=q_sq,
        angle_grid=dist_grid, angle_cdf=dist_cdf,
    )


def rho_law(
    spec: OverlapLawSpec,
    mode: str = "sample",
    count: int = 100_000,
    rng: np.random.Generator | None = None,
):
    """Overlap law of two independent tilted directions.

    mode "sample" returns an EmpiricalLaw1D of (r*)^2 <Omega^a, Omega^b>;
    mode "quadrature" (d = 2 only) returns a gridded RhoTable.
    """
    if mode == "quadrature":
        if spec.d != 2:
            raise ValueError("quadrature route implemented for d = 2")
        return _rho_quadrature_d2(spec)
    if mode != "sample":
        raise ValueError("mode must be 'sample' or 'quadrature'")
    if rng is None:
        rng = np.random.default_rng(0)
    law = spec.law
    a = sample_gamma(law, count, rng)
    b = sample_gamma(law, count, rng)
    inner = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    q = spec.r_star**2 * inner
    return EmpiricalLaw1D.from_samples(q, support=spec.support)
