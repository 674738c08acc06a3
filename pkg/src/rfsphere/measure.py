"""Equal-area sphere partitions, empirical-law distances, and state fingerprints.

The partition construction follows the recursive zonal equal-area scheme:
two polar caps plus collars of equal-area azimuthal cells, with collar
boundaries fattened so every cell area is exactly |S^{d-1}|/N in closed
form.  Distances between real-valued empirical laws use the exact
1-Wasserstein metric under quantile coupling, capped at 2, which for
interval-supported laws upper-bounds the bounded-Lipschitz metric; distances
between windowed product states use the local-to-global coupling bound with
per-coordinate Gaussian quantile couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

__all__ = [
    "SpherePartition",
    "CellHistogram",
    "EmpiricalLaw1D",
    "WindowFingerprint",
    "AtomicMeasure",
    "eq_partition",
    "cell_histogram",
    "bl_distance_1d",
    "product_bl_upper_bound",
    "coupling_weight_constant",
    "aw_density_cells",
    "fingerprint_state",
    "approximate_by_atoms",
    "tv_distance",
    "resultant_length",
    "concentration_from_resultant",
]

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# equal-area partitions


@dataclass(frozen=True)
class SpherePartition:
    """Equal-area partition of S^dim (dim = 1: circle, dim = 2: 2-sphere).

    Cells are stored in angular coordinates.  For dim 1 each cell is an arc
    [lo, hi) of the azimuth; for dim 2 each cell is a colatitude band
    crossed with an azimuth interval (caps own the full azimuth range).
    Boundary points are assigned to the lowest owning cell index.
    """

    dim: int
    num_cells: int
    # dim 1: (N, 2) azimuth bounds.  dim 2: (N, 4) rows (th_lo, th_hi, ph_lo, ph_hi)
    bounds: np.ndarray
    # dim 2 only: decreasing cos-colatitude boundaries between bands
    cos_band_bounds: np.ndarray | None
    band_offsets: np.ndarray | None  # first cell index of each band
    band_cells: np.ndarray | None  # number of azimuthal cells per band

    @property
    def sphere_area(self) -> float:
        return TWO_PI if self.dim == 1 else 2.0 * TWO_PI

    @property
    def cell_area(self) -> float:
        return self.sphere_area / self.num_cells

    def areas(self) -> np.ndarray:
        """Analytic cell areas."""
        if self.dim == 1:
            return self.bounds[:, 1] - self.bounds[:, 0]
        th_lo, th_hi = self.bounds[:, 0], self.bounds[:, 1]
        ph = self.bounds[:, 3] - self.bounds[:, 2]
        return (np.cos(th_lo) - np.cos(th_hi)) * ph

    def representatives(self) -> np.ndarray:
        """Interior representative point of each cell (angular centroid)."""
        if self.dim == 1:
            mid = 0.5 * (self.bounds[:, 0] + self.bounds[:, 1])
            return np.column_stack([np.cos(mid), np.sin(mid)])
        reps = np.empty((self.num_cells, 3))
        for k in range(self.num_cells):
            th_lo, th_hi, ph_lo, ph_hi = self.bounds[k]
            if th_lo == 0.0 and ph_hi - ph_lo >= TWO_PI:
                reps[k] = (0.0, 0.0, 1.0)
                continue
            if th_hi >= math.pi and ph_hi - ph_lo >= TWO_PI:
                reps[k] = (0.0, 0.0, -1.0)
                continue
            cth = 0.5 * (math.cos(th_lo) + math.cos(th_hi))
            th = math.acos(cth)
            ph = 0.5 * (ph_lo + ph_hi)
            reps[k] = (math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph),
                       math.cos(th))
        return reps

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Cell index of each unit vector; ties go to the lowest index."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dim == 1:
            phi = np.arctan2(points[:, 1], points[:, 0]) % TWO_PI
            return _azimuth_bin(phi, self.num_cells)
        z = np.clip(points[:, 2], -1.0, 1.0)
        band = np.searchsorted(-self.cos_band_bounds, -z, side="left")
        phi = np.arctan2(points[:, 1], points[:, 0]) % TWO_PI
        idx = np.empty(points.shape[0], dtype=np.int64)
        for b in np.unique(band):
            sel = band == b
            cells = int(self.band_cells[b])
            local = _azimuth_bin(phi[sel], cells) if cells > 1 else 0
            idx[sel] = self.band_offsets[b] + local
        return idx

    def band_of_cell(self, k: int) -> int:
        return int(np.searchsorted(self.band_offsets, k, side="right") - 1)

    def boundary_samples(self, k: int, per_edge: int = 60) -> np.ndarray:
        """Dense boundary sample of a cell, for diameter measurement."""
        t = np.linspace(0.0, 1.0, per_edge)
        if self.dim == 1:
            lo, hi = self.bounds[k]
            ang = lo + (hi - lo) * t
            return np.column_stack([np.cos(ang), np.sin(ang)])
        th_lo, th_hi, ph_lo, ph_hi = self.bounds[k]
        angles = []
        for th in (th_lo, th_hi):
            angles.append(np.column_stack([np.full_like(t, th), ph_lo + (ph_hi - ph_lo) * t]))
        for ph in (ph_lo, ph_hi):
            angles.append(np.column_stack([th_lo + (th_hi - th_lo) * t, np.full_like(t, ph)]))
        ang = np.vstack(angles)
        st, ct = np.sin(ang[:, 0]), np.cos(ang[:, 0])
        return np.column_stack([st * np.cos(ang[:, 1]), st * np.sin(ang[:, 1]), ct])

    def cell_diameters(self, per_edge: int = 60) -> np.ndarray:
        """Geodesic cell diameters measured by dense boundary sampling."""
        out = np.empty(self.num_cells)
        for k in range(self.num_cells):
            pts = self.boundary_samples(k, per_edge)
            gram = np.clip(pts @ pts.T, -1.0, 1.0)
            out[k] = math.acos(float(gram.min()))
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "num_cells": self.num_cells,
            "bounds": self.bounds.tolist(),
            "representatives": self.representatives().tolist(),
        }


def _azimuth_bin(phi: np.ndarray, cells: int) -> np.ndarray:
    width = TWO_PI / cells
    t = phi / width
    k = np.floor(t).astype(np.int64)
    # exact boundary hits belong to the lower-indexed cell on their left
    exact = (t == k) & (k > 0)
    k[exact] -= 1
    return np.minimum(k, cells - 1)


def eq_partition(dim: int, num_cells: int) -> SpherePartition:
    """Equal-area partition with N cells of S^1 (arcs) or S^2 (caps + collars)."""
    if num_cells < 2:
        raise ValueError("need at least 2 cells")
    if dim == 1:
        edges = TWO_PI * np.arange(num_cells + 1) / num_cells
        bounds = np.column_stack([edges[:-1], edges[1:]])
        return SpherePartition(
            dim=1, num_cells=num_cells, bounds=bounds, cos_band_bounds=None,
            band_offsets=np.arange(num_cells), band_cells=np.ones(num_cells, dtype=int),
        )
    if dim != 2:
        raise ValueError("only sphere dimensions 1 and 2 are implemented")

    n = num_cells
    if n == 2:
        bounds = np.array([[0.0, math.pi / 2, 0.0, TWO_PI],
                           [math.pi / 2, math.pi, 0.0, TWO_PI]])
        return SpherePartition(
            dim=2, num_cells=2, bounds=bounds, cos_band_bounds=np.array([0.0]),
            band_offsets=np.array([0, 1]), band_cells=np.array([1, 1]),
        )

    theta_cap = math.acos(1.0 - 2.0 / n)
    ideal_angle = math.sqrt(4.0 * math.pi / n)
    n_collars = max(1, round((math.pi - 2.0 * theta_cap) / ideal_angle))
    fitting = (math.pi - 2.0 * theta_cap) / n_collars

    # ideal cell counts per collar, rounded with cumulative correction
    counts = []
    acc = 0.0
    for i in range(n_collars):
        th1 = theta_cap + i * fitting
        th2 = theta_cap + (i + 1) * fitting
        ideal = (math.cos(th1) - math.cos(th2)) * n / 2.0
        m = max(1, round(ideal + acc))
        acc += ideal - m
        counts.append(m)
    total = 2 + sum(counts)
    if total != n:  # absorb any residual in the largest collar
        counts[int(np.argmax(counts))] += n - total

    # exact band boundaries: cumulative cell counts above each boundary
    cum = np.concatenate([[1], 1 + np.cumsum(counts)])
    cos_bounds = 1.0 - 2.0 * cum / n
    thetas = np.arccos(np.clip(cos_bounds, -1.0, 1.0))

    bounds = [np.array([0.0, thetas[0], 0.0, TWO_PI])]
    band_offsets = [0, 1]
    band_cells = [1]
    for i, m in enumerate(counts):
        th_lo, th_hi = thetas[i], thetas[i + 1]
        edges = TWO_PI * np.arange(m + 1) / m
        for k in range(m):
            bounds.append(np.array([th_lo, th_hi, edges[k], edges[k + 1]]))
        band_cells.append(m)
        band_offsets.append(band_offsets[-1] + m)
    bounds.append(np.array([thetas[-1], math.pi, 0.0, TWO_PI]))
    band_cells.append(1)

    return SpherePartition(
        dim=2, num_cells=n, bounds=np.vstack(bounds),
        cos_band_bounds=cos_bounds,
        band_offsets=np.asarray(band_offsets),
        band_cells=np.asarray(band_cells, dtype=int),
    )


@dataclass(frozen=True)
class CellHistogram:
    partition: SpherePartition
    counts: np.ndarray
    total: int

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total


def cell_histogram(points: np.ndarray, partition: SpherePartition) -> CellHistogram:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    norms = np.linalg.norm(points, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector cannot be assigned to a cell")
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("points must lie on the unit sphere (tolerance 1e-9)")
    unit = points / norms[:, None]
    idx = partition.assign(unit)
    counts = np.bincount(idx, minlength=partition.num_cells).astype(float)
    return CellHistogram(partition=partition, counts=counts, total=points.shape[0])


# ---------------------------------------------------------------------------
# empirical laws and distances


@dataclass(frozen=True)
class EmpiricalLaw1D:
    """Sorted sample of a real observable with optional declared support."""

    values: np.ndarray
    support: tuple | None = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.size == 0:
            raise ValueError("empty sample")
        if self.support is not None:
            lo, hi = self.support
            if v[0] < lo or v[-1] > hi:
                raise ValueError("sample leaves the declared support")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_samples(cls, samples, support=None) -> "EmpiricalLaw1D":
        return cls(values=np.asarray(samples, dtype=float), support=support)

    @property
    def count(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())

    def stdev(self) -> float:
        return float(self.values.std())


def bl_distance_1d(law_a: EmpiricalLaw1D, law_b: EmpiricalLaw1D) -> float:
    """Exact 1-Wasserstein distance of two empirical laws, capped at 2.

    For laws supported on an interval of diameter <= 2 this equals the
    supremum over 1-Lipschitz test functions and hence upper-bounds the
    bounded-Lipschitz metric; it is reported as that surrogate.
    """
    u, v = law_a.values, law_b.values
    xs = np.concatenate([u, v])
    xs.sort(kind="mergesort")
    cu = np.searchsorted(u, xs[:-1], side="right") / u.size
    cv = np.searchsorted(v, xs[:-1], side="right") / v.size
    w1 = float(np.sum(np.abs(cu - cv) * np.diff(xs)))
    return min(w1, 2.0)


def coupling_weight_constant(d: int) -> float:
    """Normalizer of the site-component weights 2^{-(i+j)}, i >= 1, 1 <= j <= d."""
    return 1.0 - 2.0 ** (-d)


def _truncated_gaussian_coupling_cost(dm: float, ds: float) -> float:
    """E[min(|dm + ds Z|, 1)] for standard normal Z (quantile coupling cost)."""
    ds = abs(ds)
    if ds < 1e-14:
        return min(abs(dm), 1.0)
    z_lo = (-1.0 - dm) / ds
    z_hi = (1.0 - dm) / ds
    z_mid = -dm / ds
    cdf, pdf = stats.norm.cdf, stats.norm.pdf

    def partial_mean(a, b):  # integral of (dm + ds z) phi(z) over (a, b)
        return dm * (cdf(b) - cdf(a)) + ds * (pdf(a) - pdf(b))

    inner = partial_mean(z_mid, z_hi) - partial_mean(z_lo, z_mid)
    outer = 1.0 - (cdf(z_hi) - cdf(z_lo))
    return float(inner + outer)


def product_bl_upper_bound(
    fp_a: "WindowFingerprint", fp_b: "WindowFingerprint", window: int
) -> float:
    """Upper bound on the BL distance of two windowed product states.

    Evaluates the local-to-global coupling bound: weighted per-coordinate
    quantile-coupling costs over the first ``window`` sites plus the exact
    tail term for everything beyond the window.
    """
    if fp_a.means.shape != fp_b.means.shape:
        raise ValueError("mismatched windows")
    if window > fp_a.means.shape[0]:
        raise ValueError("window exceeds the fingerprint size")
    d = fp_a.means.shape[1]
    c_d = coupling_weight_constant(d)
    total = 0.0
    for i in range(window):
        for j in range(d):
            cost = _truncated_gaussian_coupling_cost(
                fp_a.means[i, j] - fp_b.means[i, j],
                fp_a.stdevs[i, j] - fp_b.stdevs[i, j],
            )
            total += cost * 2.0 ** (-(i + 1 + j + 1))
    tail = 2.0 ** (1 - window)  # (2 / C(d)) * 2^{-window} * (1 - 2^{-d})
    return total / c_d + tail


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


# ---------------------------------------------------------------------------
# tilted-density cell masses


def _inverse_quadratic_density(sigma_inv: np.ndarray, omega: np.ndarray, power: float):
    quad = np.einsum("...i,ij,...j->...", omega, sigma_inv, omega)
    return quad ** (-power)


def aw_density_cells(sigma: np.ndarray, partition: SpherePartition) -> np.ndarray:
    """Cell masses of the direction density of a centered Gaussian N(0, Sigma).

    The density on the sphere is proportional to <Omega, Sigma^{-1} Omega>^{-d/2};
    each cell mass is computed by Gauss-Legendre quadrature and normalized by an
    independently gridded whole-sphere integral.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    if np.any(np.linalg.eigvalsh(sigma) <= 0):
        raise ValueError("covariance must be positive definite")
    if d not in (2, 3) or partition.dim != d - 1:
        raise ValueError("supported spin dimensions: 2 and 3, with matching partition")
    sigma_inv = np.linalg.inv(sigma)
    power = d / 2.0

    if d == 2:
        nodes, weights = np.polynomial.legendre.leggauss(64)

        def arc_integral(lo, hi):
            ang = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            om = np.column_stack([np.cos(ang), np.sin(ang)])
            vals = _inverse_quadratic_density(sigma_inv, om, power)
            return 0.5 * (hi - lo) * float(weights @ vals)

        cells = np.array([arc_integral(lo, hi) for lo, hi in partition.bounds])
        # independent whole-circle normalizer on a different grid
        ref_nodes, ref_w = np.polynomial.legendre.leggauss(400)
        ang = math.pi * (ref_nodes + 1.0)
        om = np.column_stack([np.cos(ang), np.sin(ang)])
        normalizer = math.pi * float(ref_w @ _inverse_quadratic_density(sigma_inv, om, power))
        return cells / normalizer

    nodes, weights = np.polynomial.legendre.leggauss(48)

    def rect_integral(th_lo, th_hi, ph_lo, ph_hi):
        th = 0.5 * (th_hi - th_lo) * nodes + 0.5 * (th_hi + th_lo)
        ph = 0.5 * (ph_hi - ph_lo) * nodes + 0.5 * (ph_hi + ph_lo)
        tt, pp = np.meshgrid(th, ph, indexing="ij")
        om = np.stack(
            [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
        )
        vals = _inverse_quadratic_density(sigma_inv, om, power) * np.sin(tt)
        scale = 0.25 * (th_hi - th_lo) * (ph_hi - ph_lo)
        return scale * float(weights @ vals @ weights)

    cells = np.array([rect_integral(*row) for row in partition.bounds])
    ref_nodes, ref_w = np.polynomial.legendre.leggauss(160)
    th = 0.5 * math.pi * (ref_nodes + 1.0)
    ph = math.pi * (ref_nodes + 1.0)
    tt, pp = np.meshgrid(th, ph, indexing="ij")
    om = np.stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1)
    vals = _inverse_quadratic_density(sigma_inv, om, power) * np.sin(tt)
    normalizer = 0.5 * math.pi * math.pi * float(ref_w @ vals @ ref_w)
    return cells / normalizer


# ---------------------------------------------------------------------------
# fingerprints


@dataclass(frozen=True)
class WindowFingerprint:
    """Finite summary of a state on a site window: moments, direction, tilt."""

    sites: np.ndarray  # window site indices (0-based)
    means: np.ndarray  # (w, d)
    stdevs: np.ndarray  # (w, d)
    direction: np.ndarray  # (d,) unit vector
    tilt_magnitude: float | None


def resultant_length(directions: np.ndarray) -> float:
    """Norm of the average of unit vectors."""
    return float(np.linalg.norm(np.mean(directions, axis=0)))


def _mean_resultant(kappa: float, d: int) -> float:
    if kappa <= 0:
        return 0.0
    if d == 1:
        return math.tanh(kappa)
    if d == 2:
        return float(special.i1e(kappa) / special.i0e(kappa))
    if d == 3:
        return 1.0 / math.tanh(kappa) - 1.0 / kappa
    raise ValueError("resultant inversion implemented for d <= 3")


def concentration_from_resultant(r_bar: float, d: int) -> float:
    """Invert the mean resultant length of the tilted sphere law."""
    r_bar = min(max(r_bar, 0.0), 1.0 - 1e-12)
    if r_bar == 0.0:
        return 0.0
    return float(
        optimize.brentq(lambda k: _mean_resultant(k, d) - r_bar, 1e-12, 1e8, xtol=1e-10)
    )


def fingerprint_state(
    window_configs: np.ndarray,
    window_field: np.ndarray,
    constants,
    params,
    sites: np.ndarray | None = None,
    latents: np.ndarray | None = None,
) -> WindowFingerprint:
    """Summarize sampled configurations on a window of sites.

    ``window_configs`` has shape (draws, w, d); ``window_field`` is the field
    restricted to the same sites.  The direction estimate removes the local
    field shift (unit scaling) and normalizes; the tilt magnitude is inverted
    from the angular resultant of the latent x-samples when provided.
    """
    configs = np.asarray(window_configs, dtype=float)
    if configs.ndim != 3 or configs.shape[0] < 100:
        raise ValueError("need at least 100 configurations of shape (draws, w, d)")
    if constants.r_star == 0.0:
        raise ValueError("paramagnetic constants: magnetization direction undefined")
    field = np.asarray(window_field, dtype=float)
    means = configs.mean(axis=0)
    stdevs = configs.std(axis=0)
    if params.scaled:
        residual = configs / constants.r_star
    else:
        residual = (configs - field[None, :, :]) / constants.r_star
    direction = residual.mean(axis=(0, 1))
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("degenerate direction estimate")
    direction = direction / norm

    tilt = None
    if latents is not None:
        x = np.atleast_2d(np.asarray(latents, dtype=float))[:, : params.d]
        norms = np.linalg.norm(x, axis=1)
        ok = norms > 0
        if np.any(ok):
            r_bar = resultant_length(x[ok] / norms[ok, None])
            kappa = concentration_from_resultant(r_bar, params.d)
            tilt = kappa / (params.beta * constants.r_star)
    w = configs.shape[1]
    site_idx = np.arange(w) if sites is None else np.asarray(sites)
    return WindowFingerprint(
        sites=site_idx, means=means, stdevs=stdevs, direction=direction,
        tilt_magnitude=tilt,
    )


# ---------------------------------------------------------------------------
# atomic approximation


@dataclass(frozen=True)
class AtomicMeasure:
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.points.shape[0], size=count, p=self.weights)
        return self.points[idx]


def approximate_by_atoms(masses: np.ndarray, partition: SpherePartition) -> AtomicMeasure:
    """Atomic measure placing each cell's mass on its representative point."""
    masses = np.asarray(masses, dtype=float)
    if masses.shape[0] != partition.num_cells:
        raise ValueError("one mass per cell required")
    if abs(float(masses.sum()) - 1.0) > 1e-9:
        raise ValueError("masses must sum to 1")
    return AtomicMeasure(points=partition.representatives(), weights=masses)
