"""Deterministic Cramer-Rao bound on the angle for known pilots.

Unknowns are ``(theta, Re xi, Im xi)``; the noise variance is treated as
known, which leaves the angle bound unchanged for this Gaussian model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_model import ArrayGeometry, PilotSchedule, Scenario, steering_derivative, steering_vector

MAX_CONDITION = 1e12


class SingularFisherError(ValueError):
    """The Fisher information is not invertible at this geometry."""


@dataclass(frozen=True)
class FisherInfo:
    F: np.ndarray


def mean_jacobian(geometry: ArrayGeometry, scenario: Scenario, schedule: PilotSchedule) -> np.ndarray:
    """Columns d mu / d(theta, Re xi, Im xi) of the stacked noiseless signal, ``(QL, 3)``."""
    b = schedule.stacked_response(steering_vector(geometry, scenario.theta))
    db = schedule.stacked_response(steering_derivative(geometry, scenario.theta))
    return np.column_stack([scenario.xi * db, b, 1j * b])


def fisher_information(
    geometry: ArrayGeometry, scenario: Scenario, schedule: PilotSchedule
) -> FisherInfo:
    """``F = (2 / sigma^2) Re(J^H J)``."""
    if not scenario.noise_var > 0:
        raise ValueError("noise variance must be positive")
    J = mean_jacobian(geometry, scenario, schedule)
    F = 2.0 / scenario.noise_var * (J.conj().T @ J).real
    return FisherInfo((F + F.T) / 2)


def crlb_theta(fisher: FisherInfo) -> float:
    """Variance bound on theta, rad^2."""
    F = fisher.F
    if not np.all(np.isfinite(F)) or np.linalg.cond(F) > MAX_CONDITION:
        raise SingularFisherError("Fisher information is singular")
    return float(np.linalg.inv(F)[0, 0])


def scrlb_theta_degrees(geometry: ArrayGeometry, scenario: Scenario, schedule: PilotSchedule) -> float:
    """Square root of the angle bound, in degrees."""
    return math.degrees(math.sqrt(crlb_theta(fisher_information(geometry, scenario, schedule))))
