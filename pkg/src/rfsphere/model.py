"""Model parameters, disorder statistics, tilting functions and regime analysis.

The model is the mean-field spherical model for d-dimensional spins
phi(1), ..., phi(n) in R^d subject to the single global constraint
sum_i <phi(i), phi(i)> = n, coupled to an external field h with energy

    H_n(phi) = -||M_n(phi)||^2 / (2n) - c_n * sum_i <h(i), phi(i)>,

where M_n = sum_i phi(i) and c_n = 1 (unit scaling) or n^{-1/2}
(volume-scaled fields).  The equilibrium structure at inverse temperature
beta is controlled by the exponential tilting function psi_n on the open
unit ball of the latent variables (x, y), and by the maximizers of its
uniform limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

__all__ = [
    "FieldScaling",
    "ModelParams",
    "DisorderSample",
    "SampleStats",
    "CriticalConstants",
    "Regime",
    "MaximizerResult",
    "DegenerateDisorderError",
    "DomainError",
    "ConvergenceError",
    "compute_sample_stats",
    "evaluate_observables",
    "tilt_values",
    "finite_volume_tilt",
    "limiting_tilt",
    "reduced_tilt_value",
    "classify_regime",
    "maximizer_set_numeric",
]


class DegenerateDisorderError(ValueError):
    """A field component has zero sample standard deviation."""


class DomainError(ValueError):
    """Argument outside the open ball / angular domain."""


class ConvergenceError(RuntimeError):
    """Numeric maximizer failed to converge; carries the final gradient norm."""

    def __init__(self, msg: str, gradient_norm: float):
        super().__init__(f"{msg} (|grad| = {gradient_norm:.3e})")
        self.gradient_norm = gradient_norm


class FieldScaling(str, Enum):
    UNIT = "unit"
    INVERSE_SQRT_VOLUME = "inverse_sqrt_volume"


class Regime(str, Enum):
    UNIQUE_MAXIMIZER = "unique_maximizer"
    FERROMAGNETIC_SPHERE = "ferromagnetic_sphere"


@dataclass(frozen=True)
class ModelParams:
    """Spin dimension, inverse temperature and field-scaling convention."""

    spin_dimension: int
    inverse_temperature: float
    field_scaling: FieldScaling = FieldScaling.UNIT

    def __post_init__(self):
        if self.spin_dimension < 1:
            raise ValueError("spin_dimension must be >= 1")
        if not self.inverse_temperature > 0:
            raise ValueError("inverse_temperature must be > 0")

    @property
    def d(self) -> int:
        return self.spin_dimension

    @property
    def beta(self) -> float:
        return self.inverse_temperature

    @property
    def scaled(self) -> bool:
        return self.field_scaling is FieldScaling.INVERSE_SQRT_VOLUME


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the field on n sites, d components per site."""

    values: np.ndarray  # (n, d)
    spec: object = None  # FieldDistributionSpec that generated it, if any

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("disorder values must be an (n, d) array with n >= 1")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SampleStats:
    """Sample mean, per-component sample stdev and the partial sum S_n = n*m_n."""

    mean: np.ndarray  # m_n, (d,)
    stdev: np.ndarray  # s_n, (d,)
    walk_sum: np.ndarray  # S_n = n * m_n, (d,)

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.stdev == 0.0))


@dataclass(frozen=True)
class CriticalConstants:
    """Radius and y-location of the maximizer set of the limiting tilt."""

    r_star: float
    y_star: np.ndarray  # (d,)
    s_norm_sq: float


@dataclass(frozen=True)
class Observables:
    energy: float  # H_n
    magnetization: np.ndarray  # M_n, (d,)
    constraint: float  # N_n


@dataclass(frozen=True)
class MaximizerResult:
    """Numerically located global maximizer of the limiting tilt.

    ``x_radius`` is the radius of the x-part, ``y_vector`` the y-part;
    ``orbit`` is True when the maximizer is a full sphere orbit
    (rotationally symmetric case m = 0, x_radius > 0) rather than a point.
    """

    x_radius: float
    y_vector: np.ndarray
    orbit: bool
    value: float
    gradient_norm: float


def compute_sample_stats(h: DisorderSample | np.ndarray) -> SampleStats:
    """Sample mean m_n, stdev s_n (as (1/n) sum h^2 - m_n^2, per component) and S_n."""
    values = h.values if isinstance(h, DisorderSample) else np.asarray(h, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    second = (values**2).mean(axis=0)
    var = np.maximum(second - mean**2, 0.0)
    return SampleStats(mean=mean, stdev=np.sqrt(var), walk_sum=n * mean)


def field_scale_factor(params: ModelParams, n: int) -> float:
    return 1.0 / math.sqrt(n) if params.scaled else 1.0


def evaluate_observables(
    phi: np.ndarray, h: DisorderSample | np.ndarray, params: ModelParams
) -> Observables:
    """Energy, magnetization vector and constraint value of one configuration."""
    phi = np.asarray(phi, dtype=float)
    values = h.values if isinstance(h, DisorderSample) else np.asarray(h, dtype=float)
    if phi.shape != values.shape:
        raise ValueError(f"shape mismatch: phi {phi.shape} vs field {values.shape}")
    n = phi.shape[0]
    mag = phi.sum(axis=0)
    c = field_scale_factor(params, n)
    energy = -float(mag @ mag) / (2 * n) - c * float(np.sum(values * phi))
    constraint = float(np.sum(phi * phi))
    return Observables(energy=energy, magnetization=mag, constraint=constraint)


def _check_ball(x: np.ndarray, y: np.ndarray):
    if float(x @ x + y @ y) >= 1.0:
        raise DomainError("(x, y) must satisfy ||x||^2 + ||y||^2 < 1")


def finite_volume_tilt(
    x: np.ndarray, y: np.ndarray, stats: SampleStats, params: ModelParams, n: int
) -> float:
    """psi_n(x, y) with the field statistics of ``stats``.

    Volume-scaled fields replace (m_n, s_n) by (m_n, s_n)/sqrt(n).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_ball(x, y)
    beta, d = params.beta, params.d
    c = field_scale_factor(params, n)
    lin = beta * c * (float(stats.mean @ x) + float(stats.stdev @ y))
    return (
        0.5 * beta * float(x @ x)
        + lin
        + 0.5 * d * math.log(1.0 - float(x @ x) - float(y @ y))
    )


def limiting_tilt(
    x: np.ndarray, y: np.ndarray, limit_mean: np.ndarray, limit_stdev: np.ndarray,
    params: ModelParams,
) -> float:
    """Uniform limit of psi_n; scaled fields zero out both linear terms."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_ball(x, y)
    beta, d = params.beta, params.d
    if params.scaled:
        lin = 0.0
    else:
        m = np.atleast_1d(np.asarray(limit_mean, dtype=float))
        s = np.atleast_1d(np.asarray(limit_stdev, dtype=float))
        lin = beta * (float(m @ x) + float(s @ y))
    return (
        0.5 * beta * float(x @ x)
        + lin
        + 0.5 * d * math.log(1.0 - float(x @ x) - float(y @ y))
    )


def tilt_values(x, y, source, params: ModelParams, mode) -> float:
    """Dispatch between the finite-volume and limiting tilting functions.

    ``mode`` is either an integer n (finite volume; ``source`` is a
    SampleStats) or the string "limit" (``source`` is a pair of limiting
    (mean, stdev) vectors).
    """
    if mode == "limit":
        m, s = source
        return limiting_tilt(x, y, m, s, params)
    return finite_volume_tilt(x, y, source, params, int(mode))


def reduced_tilt_value(
    r: float, theta: float, y: float, stats: SampleStats, params: ModelParams,
    n: int | None = None,
) -> float:
    """Tilting function in the rotated frame: radius of x, angle to m_n, first y-coordinate."""
    if r < 0:
        raise DomainError("r must be >= 0")
    if not 0.0 <= theta <= math.pi:
        raise DomainError("theta must lie in [0, pi]")
    if r * r + y * y >= 1.0:
        raise DomainError("r^2 + y^2 must be < 1")
    beta, d = params.beta, params.d
    c = 1.0 if (n is None or not params.scaled) else 1.0 / math.sqrt(n)
    m_norm = float(np.linalg.norm(stats.mean)) * c
    s_norm = float(np.linalg.norm(stats.stdev)) * c
    return (
        0.5 * beta * r * r
        + beta * r * m_norm * math.cos(theta)
        + beta * s_norm * y
        + 0.5 * d * math.log(1.0 - r * r - y * y)
    )


def _paramagnetic_y_radius(beta_d: float, s_norm: float) -> float:
    # unique-maximizer branch of the reduced one-component problem
    if s_norm == 0.0:
        return 0.0
    a = 1.0 / (2.0 * beta_d * s_norm)
    return math.sqrt(1.0 + a * a) - a


def classify_regime(
    params: ModelParams, spec_second_moments: np.ndarray
) -> tuple[Regime, CriticalConstants]:
    """Phase classification from the limiting field moments E h_j^2.

    Volume-scaled fields behave as if the limiting field moments vanish,
    so the ordered phase there is simply beta > d.
    """
    moments = np.atleast_1d(np.asarray(spec_second_moments, dtype=float))
    if np.any(moments < 0):
        raise ValueError("second moments must be nonnegative")
    beta, d = params.beta, params.d
    if params.scaled:
        s_norm_sq = 0.0
        s = np.zeros_like(moments)
    else:
        s_norm_sq = float(moments.sum())
        s = np.sqrt(moments)

    ferro = s_norm_sq < 1.0 and beta > d / (1.0 - s_norm_sq)
    if ferro:
        r_star = math.sqrt(1.0 - d / beta - s_norm_sq)
        constants = CriticalConstants(r_star=r_star, y_star=s, s_norm_sq=s_norm_sq)
        return Regime.FERROMAGNETIC_SPHERE, constants

    s_norm = math.sqrt(s_norm_sq)
    r2 = _paramagnetic_y_radius(beta / d, s_norm)
    y_star = r2 * (s / s_norm) if s_norm > 0 else np.zeros_like(s)
    constants = CriticalConstants(r_star=0.0, y_star=y_star, s_norm_sq=s_norm_sq)
    return Regime.UNIQUE_MAXIMIZER, constants


def _reduced_objective(beta: float, d: float, m_norm: float, s_norm: float):
    def f(u):
        r1, r2 = u
        g = 1.0 - r1 * r1 - r2 * r2
        if g <= 0 or r1 < 0 or r2 < 0:
            return np.inf
        return -(
            0.5 * beta * r1 * r1
            + beta * m_norm * r1
            + beta * s_norm * r2
            + 0.5 * d * math.log(g)
        )

    def grad(u):
        r1, r2 = u
        g = 1.0 - r1 * r1 - r2 * r2
        return -np.array(
            [beta * r1 + beta * m_norm - d * r1 / g, beta * s_norm - d * r2 / g]
        )

    def hess(u):
        r1, r2 = u
        g = 1.0 - r1 * r1 - r2 * r2
        h11 = beta - d * (g + 2 * r1 * r1) / (g * g)
        h22 = -d * (g + 2 * r2 * r2) / (g * g)
        h12 = -d * 2 * r1 * r2 / (g * g)
        return -np.array([[h11, h12], [h12, h22]])

    return f, grad, hess


def maximizer_set_numeric(
    stats_or_moments, params: ModelParams, grad_tol: float = 1e-11
) -> MaximizerResult:
    """Numerically maximize the limiting tilt over the ball.

    ``stats_or_moments`` is a SampleStats (use sample mean/stdev) or a
    (mean, stdev) pair of limiting vectors.  The optimization runs on the
    two-radius reduced problem (angles are pinned at their trivially
    optimal values), with a 5x5 multistart and a Newton polish.
    """
    if isinstance(stats_or_moments, SampleStats):
        m_vec, s_vec = stats_or_moments.mean, stats_or_moments.stdev
    else:
        m_vec, s_vec = stats_or_moments
    m_vec = np.atleast_1d(np.asarray(m_vec, dtype=float))
    s_vec = np.atleast_1d(np.asarray(s_vec, dtype=float))
    if params.scaled:
        m_vec = np.zeros_like(m_vec)
        s_vec = np.zeros_like(s_vec)
    beta, d = params.beta, float(params.d)
    m_norm = float(np.linalg.norm(m_vec))
    s_norm = float(np.linalg.norm(s_vec))

    f, grad, hess = _reduced_objective(beta, d, m_norm, s_norm)
    best = None
    grid = np.linspace(0.05, 0.9, 5)
    for a in grid:
        for b in grid:
            if a * a + b * b >= 0.98:
                continue
            res = optimize.minimize(
                f, x0=np.array([a, b]), jac=grad, method="L-BFGS-B",
                bounds=[(0.0, 1.0 - 1e-12)] * 2,
                options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 500},
            )
            if best is None or res.fun < best.fun:
                best = res
    u = np.asarray(best.x, dtype=float)
    # Newton polish toward machine precision (projected onto r >= 0)
    for _ in range(40):
        g = grad(u)
        active = (u <= 0) & (g > 0)
        g = np.where(active, 0.0, g)
        if np.linalg.norm(g) < 1e-14:
            break
        try:
            step = np.linalg.solve(hess(u), g)
        except np.linalg.LinAlgError:
            break
        new = u - step
        new = np.maximum(new, 0.0)
        if new[0] ** 2 + new[1] ** 2 >= 1.0 or f(new) > f(u) + 1e-12:
            break
        u = new
    g = grad(u)
    g = np.where((u <= 0) & (g > 0), 0.0, g)
    gnorm = float(np.linalg.norm(g))
    if gnorm > grad_tol:
        raise ConvergenceError("maximizer search did not converge", gnorm)

    r1, r2 = float(u[0]), float(u[1])
    y_vec = r2 * (s_vec / s_norm) if s_norm > 0 else np.zeros(params.d)
    # at the critical curve the landscape is quartically flat in r1, so radii
    # below 1e-6 are numerically zero and the maximizer is a single point
    orbit = m_norm == 0.0 and r1 > 1e-6
    return MaximizerResult(
        x_radius=r1, y_vector=y_vec, orbit=orbit, value=-float(f(u)),
        gradient_norm=gnorm,
    )
