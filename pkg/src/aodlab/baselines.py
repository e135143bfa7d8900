"""Classical reference estimators.

``dft_estimate`` searches the DML misfit on a DFT spatial-frequency lattice.
MUSIC and ESPRIT run on the uplink dual system, where the base station
receives the user's pilot on an ``L``-element ULA with the same spacing.
"""

from __future__ import annotations

import math

import numpy as np

from .ml import dml_profile
from .search import GridConfig, golden_section
from .signal_model import ArrayGeometry, PilotSchedule, complex_normal, steering_vector

ANGLE_MARGIN = 1e-9


def dft_lattice(n_fft: int, spacing: float) -> np.ndarray:
    """Angles in (0, pi/2) whose spatial frequency lies on an ``n_fft``-point DFT grid."""
    omega = 2 * np.pi * np.arange(n_fft) / n_fft
    omega = np.where(omega >= np.pi, omega - 2 * np.pi, omega)
    cos_theta = omega / (2 * np.pi * spacing)
    keep = (cos_theta > 0) & (cos_theta < 1)
    return np.sort(np.arccos(cos_theta[keep]))


def dft_estimate(
    geometry: ArrayGeometry, schedule: PilotSchedule, Y: np.ndarray, n_fft: int = 256
) -> float:
    """Lattice angle with the smallest least-squares misfit (no refinement)."""
    if n_fft < geometry.num_antennas:
        raise ValueError("n_fft must be at least the number of antennas")
    thetas = dft_lattice(n_fft, geometry.spacing)
    profile = dml_profile(thetas, geometry, schedule, Y)
    return float(thetas[int(np.argmin(profile))])


def uplink_dual_simulate(
    theta: float,
    num_rx: int,
    num_snapshots: int,
    power: float,
    noise_var: float,
    rng: np.random.Generator,
    spacing: float = 0.5,
    gain: complex = 1.0,
) -> np.ndarray:
    """Snapshots ``Z`` ``(L, Q)`` of a single CN(0, P) source at an ``L``-element ULA.

    ``gain`` is the reciprocal path gain; pass the downlink ``xi`` so both
    links see the same SNR.
    """
    if num_rx < 2:
        raise ValueError("the uplink array needs at least two elements")
    a = steering_vector(ArrayGeometry(num_rx, spacing), theta)
    s = complex_normal(rng, num_snapshots, power)
    Z = gain * np.outer(a, s)
    if noise_var > 0:
        Z = Z + complex_normal(rng, Z.shape, noise_var)
    return Z


def _signal_subspace(Z):
    R = Z @ Z.conj().T / Z.shape[1]
    _, vecs = np.linalg.eigh((R + R.conj().T) / 2)
    return vecs  # ascending eigenvalues


def music_estimate(
    Z: np.ndarray, n_grid: int = 256, spacing: float = 0.5, refine_tol: float = 1e-5
) -> float:
    """Single-source MUSIC: grid peak of ``1/||E_n^H a||^2`` plus golden-section refinement."""
    L = Z.shape[0]
    En = _signal_subspace(Z)[:, : L - 1]
    geometry = ArrayGeometry(L, spacing)
    grid = GridConfig(num_points=n_grid, refine_tol=refine_tol)

    def null_power(theta):
        return np.sum(np.abs(En.conj().T @ steering_vector(geometry, theta)) ** 2, axis=0)

    values = null_power(grid.points())
    best = int(np.argmin(values))
    lo, hi = grid.bracket(best)
    theta, value = golden_section(lambda t: float(null_power(t)), lo, hi, refine_tol)
    return float(theta) if value <= values[best] else float(grid.points()[best])


def music_spectrum(Z: np.ndarray, thetas: np.ndarray, spacing: float = 0.5) -> np.ndarray:
    L = Z.shape[0]
    En = _signal_subspace(Z)[:, : L - 1]
    A = steering_vector(ArrayGeometry(L, spacing), np.asarray(thetas))
    return 1.0 / np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)


def esprit_rotation(u: np.ndarray) -> complex:
    """Least-squares shift invariance factor between the two overlapping subarrays."""
    u1, u2 = u[:-1], u[1:]
    energy = np.vdot(u1, u1).real
    assert energy > 0, "leading subarray of the signal eigenvector vanished"
    return complex(np.vdot(u1, u2) / energy)


def esprit_estimate(Z: np.ndarray, spacing: float = 0.5) -> float:
    """Closed-form ESPRIT angle from the principal eigenvector of the snapshot covariance."""
    if Z.shape[0] < 2:
        raise ValueError("ESPRIT needs at least two elements")
    u = _signal_subspace(Z)[:, -1]
    phi = esprit_rotation(u)
    cos_theta = -np.angle(phi) / (2 * np.pi * spacing)
    theta = math.acos(float(np.clip(cos_theta, -1.0, 1.0)))
    return min(max(theta, ANGLE_MARGIN), math.pi / 2 - ANGLE_MARGIN)
