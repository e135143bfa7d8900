"""Deterministic and stochastic maximum-likelihood angle estimators.

DML treats the pilots as known and reduces to least squares in
``(theta, xi)``; the gain is eliminated in closed form so only a 1-D search
over ``theta`` remains. SML only knows the beamformers and fits the model
covariance ``xi2 v v^H + sigma2 I`` (``v_l = x_l^T a(theta)``) to the sample
covariance through the Gaussian negative log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .search import GridConfig, golden_section, golden_section_batch
from .signal_model import ArrayGeometry, PilotSchedule, sample_covariance, steering_vector, vec

DEGENERATE_NORM = 1e-30
# log-spaced bracketing range, relative to a data-derived scale
BRACKET_LO = 1e-20
BRACKET_HI = 1e2
SCAN_PER_DECADE = 4
INNER_LOG_TOL = 1e-7


class DegenerateDirectionError(ValueError):
    """The stacked pilot response vanishes at the requested angle."""


class NotPositiveDefiniteError(ValueError):
    """Model covariance could not be Cholesky-factorized."""


@dataclass(frozen=True)
class DmlFit:
    theta_hat: float
    xi_hat: complex
    residual: float
    method: str = "dml"


@dataclass(frozen=True)
class SmlFit:
    theta_hat: float
    xi2_hat: float
    sigma2_hat: float
    nll: float
    method: str = "sml"


@dataclass(frozen=True)
class ModelCovariance:
    """``C_y = R_x + sigma2 I`` with the rank-one signal part kept separately."""

    R_x: np.ndarray
    sigma2: float

    @property
    def C(self) -> np.ndarray:
        return self.R_x + self.sigma2 * np.eye(self.R_x.shape[0])


# ---------------------------------------------------------------- DML


def dml_residual(
    theta: float, xi: complex, geometry: ArrayGeometry, schedule: PilotSchedule, Y: np.ndarray
) -> float:
    """Least-squares misfit ``sum_q ||y_q - xi X^(q) a(theta)||^2``."""
    b = schedule.stacked_response(steering_vector(geometry, theta))
    return float(np.sum(np.abs(vec(Y) - xi * b) ** 2))


def dml_xi_closed_form(
    theta: float, geometry: ArrayGeometry, schedule: PilotSchedule, Y: np.ndarray
) -> complex:
    """Gain minimizing the DML misfit for a fixed angle: ``b^H y / ||b||^2``."""
    b = schedule.stacked_response(steering_vector(geometry, theta))
    energy = float(np.vdot(b, b).real)
    if energy < DEGENERATE_NORM:
        raise DegenerateDirectionError(f"||b||^2 = {energy:.3g} at theta = {theta}")
    return complex(np.vdot(b, vec(Y)) / energy)


def dml_profile(
    thetas: np.ndarray, geometry: ArrayGeometry, schedule: PilotSchedule, Y: np.ndarray
) -> np.ndarray:
    """Concentrated DML misfit ``||y||^2 - |b^H y|^2 / ||b||^2`` on a set of angles.

    Degenerate angles come back as ``inf``.
    """
    thetas = np.asarray(thetas, dtype=float)
    resp = schedule.beamformers @ steering_vector(geometry, thetas)  # (L, K)
    matched = Y @ schedule.symbols.conj()  # sum_q conj(c_q) y_q
    corr = resp.conj().T @ matched
    energy = np.sum(np.abs(schedule.symbols) ** 2) * np.sum(np.abs(resp) ** 2, axis=0)
    total = float(np.sum(np.abs(Y) ** 2))
    out = np.full(thetas.shape, np.inf)
    ok = energy >= DEGENERATE_NORM
    out[ok] = total - np.abs(corr[ok]) ** 2 / energy[ok]
    return out


def _dml_direct(theta, geometry, schedule, Y):
    try:
        xi = dml_xi_closed_form(theta, geometry, schedule, Y)
    except DegenerateDirectionError:
        return math.inf
    return dml_residual(theta, xi, geometry, schedule, Y)


def dml_estimate(
    geometry: ArrayGeometry,
    schedule: PilotSchedule,
    Y: np.ndarray,
    grid: GridConfig = GridConfig(),
) -> DmlFit:
    """Grid search over the concentrated DML misfit plus golden-section refinement."""
    thetas = grid.points()
    profile = dml_profile(thetas, geometry, schedule, Y)
    if not np.any(np.isfinite(profile)):
        raise DegenerateDirectionError("every grid angle is degenerate")
    best = int(np.argmin(profile))
    lo, hi = grid.bracket(best)
    theta, _ = golden_section(lambda t: _dml_direct(t, geometry, schedule, Y), lo, hi, grid.refine_tol)
    if _dml_direct(theta, geometry, schedule, Y) > _dml_direct(thetas[best], geometry, schedule, Y):
        theta = float(thetas[best])
    xi = dml_xi_closed_form(theta, geometry, schedule, Y)
    return DmlFit(float(theta), xi, dml_residual(theta, xi, geometry, schedule, Y))


# ---------------------------------------------------------------- SML


def slot_response(geometry: ArrayGeometry, beamformers: np.ndarray, theta) -> np.ndarray:
    """``v_l = x_l^T a(theta)``; shape ``(L,)`` or ``(L, K)`` for an array of angles."""
    return np.asarray(beamformers) @ steering_vector(geometry, theta)


def model_covariance(
    theta: float, xi2: float, sigma2: float, geometry: ArrayGeometry, beamformers: np.ndarray
) -> ModelCovariance:
    """Model covariance of the received block under random CN(0, 1) symbols."""
    if xi2 < 0 or sigma2 < 0:
        raise ValueError("xi2 and sigma2 must be nonnegative")
    v = slot_response(geometry, beamformers, theta)
    return ModelCovariance(xi2 * np.outer(v, v.conj()), float(sigma2))


def sml_nll(
    theta: float,
    xi2: float,
    sigma2: float,
    geometry: ArrayGeometry,
    beamformers: np.ndarray,
    C_hat: np.ndarray,
) -> float:
    """``ln det C_y + tr(C_y^{-1} C_hat)`` through a Cholesky factorization."""
    C = model_covariance(theta, xi2, sigma2, geometry, beamformers).C
    return gaussian_nll(C, C_hat)


def gaussian_nll(C: np.ndarray, C_hat: np.ndarray) -> float:
    try:
        factor = cho_factor(C, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]).real)))
    trace = float(np.trace(cho_solve(factor, C_hat)).real)
    return logdet + trace


def rank_one_nll(xi2, sigma2, v_energy, v_power, total, num_slots):
    """Closed-form NLL of ``sigma2 I + xi2 v v^H`` against a sample covariance.

    Uses the determinant lemma and Sherman-Morrison; ``v_energy = ||v||^2``,
    ``v_power = v^H C_hat v``, ``total = tr(C_hat)``. Broadcasts.
    """
    gain = xi2 * v_energy
    logdet = num_slots * np.log(sigma2) + np.log1p(gain / sigma2)
    trace = (total - xi2 * v_power / (sigma2 + gain)) / sigma2
    return logdet + trace


def _log_scan_grid(lo, hi):
    decades = math.log10(hi / lo)
    n = int(round(decades * SCAN_PER_DECADE)) + 1
    return np.linspace(math.log(lo), math.log(hi), n)


def _coordinate_min(objective, current, log_lo, log_hi):
    """One coordinate update: log-spaced scan, golden section, keep if better.

    ``objective`` maps log-parameter arrays shaped like ``current`` (plus an
    optional leading scan axis) to NLL values.
    """
    scan = _log_scan_grid(1.0, BRACKET_HI / BRACKET_LO)[:, None] + log_lo[None, :]
    values = objective(scan)
    idx = np.argmin(values, axis=0)
    step = scan[1] - scan[0]
    centre = np.take_along_axis(scan, idx[None], axis=0)[0]
    lo = np.maximum(centre - step, log_lo)
    hi = np.minimum(centre + step, log_hi)
    x, fx = golden_section_batch(objective, lo, hi, INNER_LOG_TOL)
    f_now = objective(np.log(current))
    better = fx < f_now
    return np.where(better, np.exp(x), current), np.where(better, fx, f_now)


def sml_inner_fit(v_energy, v_power, total, num_slots, inner_iters=4, history=None):
    """Coordinate descent over ``(xi2, sigma2)`` at fixed angle(s).

    Vectorized over arrays of ``v_energy`` / ``v_power``. Returns
    ``(xi2, sigma2, nll)``; if ``history`` is a list, the NLL after
    initialization and after every round is appended to it.
    """
    v_energy = np.atleast_1d(np.asarray(v_energy, dtype=float))
    v_power = np.atleast_1d(np.asarray(v_power, dtype=float))
    xi_scale = total / np.maximum(v_energy, DEGENERATE_NORM)
    noise_scale = np.full(v_energy.shape, total / num_slots)
    xi_lo, xi_hi = np.log(BRACKET_LO * xi_scale), np.log(BRACKET_HI * xi_scale)
    s_lo, s_hi = np.log(BRACKET_LO * noise_scale), np.log(BRACKET_HI * noise_scale)

    xi2 = BRACKET_LO * xi_scale
    sigma2 = noise_scale.copy()
    nll = rank_one_nll(xi2, sigma2, v_energy, v_power, total, num_slots)
    if history is not None:
        history.append(nll.copy())
    for _ in range(inner_iters):
        s_fixed = sigma2
        xi2, nll = _coordinate_min(
            lambda lx: rank_one_nll(np.exp(lx), s_fixed, v_energy, v_power, total, num_slots),
            xi2, xi_lo, xi_hi,
        )
        x_fixed = xi2
        sigma2, nll = _coordinate_min(
            lambda ls: rank_one_nll(x_fixed, np.exp(ls), v_energy, v_power, total, num_slots),
            sigma2, s_lo, s_hi,
        )
        if history is not None:
            history.append(nll.copy())
    return xi2, sigma2, nll


def _scalar_nll(xi2, sigma2, v_energy, v_power, total, num_slots):
    gain = xi2 * v_energy
    return (num_slots * math.log(sigma2) + math.log1p(gain / sigma2)
            + (total - xi2 * v_power / (sigma2 + gain)) / sigma2)


def _scalar_coordinate_min(objective, current, log_lo, log_hi):
    """Scalar twin of :func:`_coordinate_min`, same scan and bracket."""
    offsets = _log_scan_grid(1.0, BRACKET_HI / BRACKET_LO)
    step = float(offsets[1] - offsets[0])
    best_x, best_f = log_lo, math.inf
    for off in offsets:
        x = log_lo + float(off)
        fx = objective(x)
        if fx < best_f:
            best_x, best_f = x, fx
    x, fx = golden_section(objective, max(best_x - step, log_lo), min(best_x + step, log_hi),
                           INNER_LOG_TOL)
    f_now = objective(math.log(current))
    return (math.exp(x), fx) if fx < f_now else (current, f_now)


def sml_inner_fit_scalar(v_energy, v_power, total, num_slots, inner_iters=4):
    """Pure-Python version of :func:`sml_inner_fit` for a single angle."""
    xi_scale = total / max(v_energy, DEGENERATE_NORM)
    noise_scale = total / num_slots
    xi_lo, xi_hi = math.log(BRACKET_LO * xi_scale), math.log(BRACKET_HI * xi_scale)
    s_lo, s_hi = math.log(BRACKET_LO * noise_scale), math.log(BRACKET_HI * noise_scale)
    xi2, sigma2 = BRACKET_LO * xi_scale, noise_scale
    nll = _scalar_nll(xi2, sigma2, v_energy, v_power, total, num_slots)
    for _ in range(inner_iters):
        s_fixed = sigma2
        xi2, nll = _scalar_coordinate_min(
            lambda lx: _scalar_nll(math.exp(lx), s_fixed, v_energy, v_power, total, num_slots),
            xi2, xi_lo, xi_hi,
        )
        x_fixed = xi2
        sigma2, nll = _scalar_coordinate_min(
            lambda ls: _scalar_nll(x_fixed, math.exp(ls), v_energy, v_power, total, num_slots),
            sigma2, s_lo, s_hi,
        )
    return xi2, sigma2, nll


def _slot_stats(thetas, geometry, beamformers, C_hat):
    v = slot_response(geometry, beamformers, np.atleast_1d(thetas))  # (L, K)
    v_energy = np.sum(np.abs(v) ** 2, axis=0)
    v_power = np.einsum("lk,lm,mk->k", v.conj(), C_hat, v).real
    return v_energy, v_power


def sml_profile(
    thetas: np.ndarray,
    geometry: ArrayGeometry,
    beamformers: np.ndarray,
    C_hat: np.ndarray,
    inner_iters: int = 4,
):
    """Inner-optimized NLL on a set of angles; returns ``(xi2, sigma2, nll)`` arrays."""
    v_energy, v_power = _slot_stats(thetas, geometry, beamformers, C_hat)
    total = float(np.trace(C_hat).real)
    xi2, sigma2, nll = sml_inner_fit(v_energy, v_power, total, C_hat.shape[0], inner_iters)
    nll = np.where(v_energy >= DEGENERATE_NORM, nll, np.inf)
    return xi2, sigma2, nll


def sml_profile_scalar(theta, geometry, beamformers, C_hat, inner_iters=4):
    v_energy, v_power = _slot_stats(theta, geometry, beamformers, C_hat)
    if v_energy[0] < DEGENERATE_NORM:
        return 0.0, float("nan"), math.inf
    total = float(np.trace(C_hat).real)
    return sml_inner_fit_scalar(float(v_energy[0]), float(v_power[0]), total,
                                C_hat.shape[0], inner_iters)


def sml_estimate_from_covariance(
    geometry: ArrayGeometry,
    beamformers: np.ndarray,
    C_hat: np.ndarray,
    grid: GridConfig = GridConfig(),
    inner_iters: int = 4,
) -> SmlFit:
    """SML fit given the sample covariance directly."""
    C_hat = np.asarray(C_hat, dtype=complex)
    if not np.trace(C_hat).real > 0:
        raise ValueError("sample covariance has no energy")
    thetas = grid.points()
    _, _, profile = sml_profile(thetas, geometry, beamformers, C_hat, inner_iters)
    if not np.any(np.isfinite(profile)):
        raise DegenerateDirectionError("every grid angle is degenerate")
    best = int(np.argmin(profile))

    def concentrated(t):
        return sml_profile_scalar(t, geometry, beamformers, C_hat, inner_iters)[2]

    lo, hi = grid.bracket(best)
    theta, value = golden_section(concentrated, lo, hi, grid.refine_tol)
    if value > profile[best]:
        theta = float(thetas[best])
    xi2, sigma2, _ = sml_profile_scalar(theta, geometry, beamformers, C_hat, inner_iters)
    nll = sml_nll(theta, xi2, sigma2, geometry, beamformers, C_hat)
    return SmlFit(float(theta), xi2, sigma2, nll)


def sml_estimate(
    geometry: ArrayGeometry,
    beamformers: np.ndarray,
    Y: np.ndarray,
    grid: GridConfig = GridConfig(),
    inner_iters: int = 4,
) -> SmlFit:
    """Grid search over the profiled SML likelihood plus golden-section refinement."""
    return sml_estimate_from_covariance(
        geometry, beamformers, sample_covariance(Y), grid, inner_iters
    )
