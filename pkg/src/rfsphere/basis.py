"""Field-adapted orthonormal basis of (R^d)^n and the associated frames.

For each component j the two explicit basis vectors are the normalized
constant vector u = 1/sqrt(n) and the centered-field vector
v_j = (h_j - m_j) / (sqrt(n) s_j); the orthogonal complement of
span{u, v_j} inside R^n is represented implicitly by two Householder
reflections per component, so applying the completion costs O(n) and no
(n-2) x n matrix is ever stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DegenerateDisorderError, DisorderSample, compute_sample_stats

__all__ = [
    "OrthonormalBasis",
    "FieldFrames",
    "build_basis",
    "build_frames",
    "change_of_frame",
    "householder_matrix",
    "angles_to_sphere",
    "sphere_to_angles",
    "hypersphere_roundtrip",
]


def _householder_vector(src: np.ndarray, k: int) -> np.ndarray | None:
    """Reflection vector w such that H_w(src) = e_k, or None when src = e_k."""
    target = np.zeros_like(src)
    target[k] = 1.0
    w = src - target
    norm2 = float(w @ w)
    if norm2 < 1e-28:
        return None
    return w


def _apply_householder(w: np.ndarray | None, z: np.ndarray) -> np.ndarray:
    if w is None:
        return z
    coef = 2.0 / float(w @ w)
    # z may be (n,) or (batch, n)
    return z - coef * np.outer(z @ w, w).reshape(z.shape)


@dataclass(frozen=True)
class OrthonormalBasis:
    """Per-component explicit pair (u, v_j) plus the implicit completion."""

    n: int
    d: int
    u: np.ndarray  # (n,), shared across components
    v: np.ndarray  # (n, d), component j column
    _w1: np.ndarray | None  # Householder taking u -> e_0
    _w2: list  # per component: Householder taking H1(v_j) -> e_1

    def complement_from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        """Map coefficients (batch, n, d) with rows 0, 1 zero into the complement.

        Column j of the output is orthogonal to both u and v_j.
        """
        out = np.empty_like(coeffs)
        for j in range(self.d):
            z = coeffs[..., j]
            z = _apply_householder(self._w2[j], z)
            z = _apply_householder(self._w1, z)
            out[..., j] = z
        return out

    def project_out_explicit(self, phi: np.ndarray) -> np.ndarray:
        """Remove the span of the explicit vectors, per component."""
        out = phi.copy()
        for j in range(self.d):
            col = out[..., j]
            col -= np.outer(col @ self.u, self.u).reshape(col.shape)
            col -= np.outer(col @ self.v[:, j], self.v[:, j]).reshape(col.shape)
            out[..., j] = col
        return out


def build_basis(h: DisorderSample) -> OrthonormalBasis:
    stats = compute_sample_stats(h)
    if stats.degenerate:
        raise DegenerateDisorderError(
            "a field component has zero sample stdev; the centered basis vector "
            "is undefined"
        )
    n, d = h.n, h.d
    u = np.full(n, 1.0 / math.sqrt(n))
    v = (h.values - stats.mean) / (math.sqrt(n) * stats.stdev)
    w1 = _householder_vector(u, 0)
    w2 = []
    for j in range(d):
        vj = _apply_householder(w1, v[:, j])
        w2.append(_householder_vector(vj, 1) if n > 1 else None)
    return OrthonormalBasis(n=n, d=d, u=u, v=v, _w1=w1, _w2=w2)


def householder_matrix(direction: np.ndarray) -> np.ndarray:
    """Orthogonal symmetric matrix whose first row is the given unit vector."""
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("zero reference vector")
    unit = direction / norm
    d = unit.shape[0]
    w = _householder_vector(unit, 0)
    if w is None:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(w, w) / float(w @ w)


@dataclass(frozen=True)
class FieldFrames:
    """Orthogonal maps sending the mean direction (O) and stdev direction (U) to e_1."""

    o_matrix: np.ndarray | None  # None when m = 0
    u_matrix: np.ndarray


def build_frames(mean: np.ndarray, stdev: np.ndarray) -> FieldFrames:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    stdev = np.atleast_1d(np.asarray(stdev, dtype=float))
    o = householder_matrix(mean) if np.linalg.norm(mean) > 0 else None
    if np.linalg.norm(stdev) == 0:
        raise ValueError("zero stdev vector; the U frame is undefined")
    u = householder_matrix(stdev)
    return FieldFrames(o_matrix=o, u_matrix=u)


def change_of_frame(
    vector: np.ndarray, frames: FieldFrames, which: str, direction: str = "fwd"
) -> np.ndarray:
    """Apply O or U (or the inverse) to a d-vector; both are involutions here
    but the inverse is applied through the transpose for clarity."""
    if which not in ("O", "U"):
        raise ValueError("which must be 'O' or 'U'")
    mat = frames.o_matrix if which == "O" else frames.u_matrix
    if mat is None:
        raise ValueError("frame built from a zero reference vector")
    vector = np.asarray(vector, dtype=float)
    if direction == "fwd":
        return mat @ vector
    if direction == "inv":
        return mat.T @ vector
    raise ValueError("direction must be 'fwd' or 'inv'")


def angles_to_sphere(angles: np.ndarray) -> np.ndarray:
    """Unit vector from (d-1) angles: polar angles in [0, pi], final azimuth in [0, 2*pi).

    Omega_1 = cos(theta_1), Omega_k = sin(theta_1)...sin(theta_{k-1}) cos(theta_k),
    Omega_d = sin(theta_1)...sin(theta_{d-1}).
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    d = angles.shape[0] + 1
    out = np.empty(d)
    sin_prod = 1.0
    for k in range(d - 1):
        out[k] = sin_prod * math.cos(angles[k])
        sin_prod *= math.sin(angles[k])
    out[d - 1] = sin_prod
    return out


def sphere_to_angles(omega: np.ndarray) -> np.ndarray:
    """Inverse of angles_to_sphere; singular points decode with azimuths 0."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = omega.shape[0]
    angles = np.zeros(d - 1)
    sin_prod = 1.0
    for k in range(d - 2):
        c = omega[k] / sin_prod if sin_prod > 1e-300 else 1.0
        c = min(1.0, max(-1.0, c))
        angles[k] = math.acos(c)
        sin_prod *= math.sin(angles[k])
    if d >= 2:
        # last angle is a full azimuth
        if sin_prod > 1e-300:
            angles[d - 2] = math.atan2(omega[d - 1] / sin_prod, omega[d - 2] / sin_prod) % (
                2.0 * math.pi
            )
        else:
            angles[d - 2] = 0.0
    return angles


def hypersphere_roundtrip(value: np.ndarray, direction: str) -> np.ndarray:
    """Encode ("to_sphere") angles as a unit vector or decode ("to_angles")."""
    if direction == "to_sphere":
        angles = np.atleast_1d(np.asarray(value, dtype=float))
        if angles.shape[0] >= 2 and (
            np.any(angles[:-1] < 0) or np.any(angles[:-1] > math.pi)
        ):
            raise ValueError("polar angles must lie in [0, pi]")
        return angles_to_sphere(angles)
    if direction == "to_angles":
        return sphere_to_angles(value)
    raise ValueError("direction must be 'to_sphere' or 'to_angles'")
