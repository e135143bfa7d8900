"""Network inputs built from the received pilots and the known pilot information.

The pilot feature ``X`` is ``M x QL``. Column ``q*L + l`` holds
``c^(q) x_l`` when the symbols are known (DML) and just ``x_l`` when only
the beamformers are known (SML). The input tensor stacks ``vec(Y)`` on top
of ``X`` and splits real and imaginary parts into two channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..signal_model import PilotSchedule, vec


class Mode(str, Enum):
    DML = "dml"
    SML = "sml"


@dataclass(frozen=True)
class PilotFeature:
    X: np.ndarray
    mode: Mode

    @property
    def num_antennas(self) -> int:
        return self.X.shape[0]


def pilot_feature_matrix(beamformers: np.ndarray, symbols: np.ndarray, mode: Mode) -> np.ndarray:
    """Batched pilot features.

    ``beamformers`` is ``(..., L, M)``, ``symbols`` ``(..., Q)``; returns
    ``(..., M, Q*L)``.
    """
    beamformers = np.asarray(beamformers)
    symbols = np.asarray(symbols)
    if Mode(mode) is Mode.SML:
        symbols = np.ones(symbols.shape)
    stacked = symbols[..., :, None, None] * beamformers[..., None, :, :]  # (..., Q, L, M)
    stacked = stacked.reshape(stacked.shape[:-3] + (-1, stacked.shape[-1]))
    return np.swapaxes(stacked, -1, -2)


def build_pilot_feature(schedule: PilotSchedule, mode: Mode) -> PilotFeature:
    mode = Mode(mode)
    return PilotFeature(pilot_feature_matrix(schedule.beamformers, schedule.symbols, mode), mode)


def build_input_tensor(feature: PilotFeature | np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Real tensor ``(2, M+1, Q*L)`` for a single sample."""
    X = feature.X if isinstance(feature, PilotFeature) else np.asarray(feature)
    y = vec(Y)
    if X.shape[1] != y.size:
        raise ValueError(f"pilot feature has {X.shape[1]} columns but Y has {y.size} entries")
    S = np.vstack([y[None, :], X])
    return np.stack([S.real, S.imag]).astype(float)


def batch_input_tensor(
    X: np.ndarray, Y: np.ndarray, y_scale: float = 1.0, x_scale: float = 1.0
) -> np.ndarray:
    """Batched, standardized input tensors ``(N, 2, M+1, Q*L)``.

    ``X`` is ``(N, M, QL)``, ``Y`` is ``(N, L, Q)``.
    """
    n = Y.shape[0]
    y = np.swapaxes(Y, 1, 2).reshape(n, 1, -1) * y_scale
    S = np.concatenate([y, np.asarray(X) * x_scale], axis=1)
    return np.stack([S.real, S.imag], axis=1)


def unpack_input_tensor(S: np.ndarray, num_slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`build_input_tensor`: returns ``(X, Y)``."""
    z = S[0] + 1j * S[1]
    y, X = z[0], z[1:]
    return X, y.reshape(-1, num_slots).T
