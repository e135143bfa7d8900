"""Narrow-band far-field MISO downlink model.

Steering vectors of a uniform linear array, free-space channel gain,
thermal noise power, random-phase beamformers and the per-block
received pilots ``y = xi * X a(theta) + w``.

Shapes used throughout the package:

* beamformers ``(L, M)`` complex, row ``l`` is the slot-``l`` weight vector;
* block symbols ``(Q,)`` complex;
* observations ``Y`` ``(L, Q)`` complex, column ``q`` is block ``q``;
* ``vec(Y)`` is column-major, i.e. index ``q * L + l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array at the base station.

    ``spacing`` is the element spacing in wavelengths (d / lambda).
    """

    num_antennas: int = 8
    spacing: float = 0.5
    carrier_freq: float = 28e9

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not self.carrier_freq > 0:
            raise ValueError(f"carrier_freq must be positive, got {self.carrier_freq}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


@dataclass(frozen=True)
class Scenario:
    """Ground truth for one link: angle, gain, noise and transmit power."""

    theta: float
    xi: complex
    noise_var: float
    tx_power: float
    range_m: float = float("nan")
    ref_range_m: float = 1.0
    pathloss_exp: float = 3.0

    def __post_init__(self):
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be nonnegative")
        if not self.tx_power > 0:
            raise ValueError("tx_power must be positive")

    @classmethod
    def from_geometry(
        cls,
        geometry: ArrayGeometry,
        theta: float,
        range_m: float,
        tx_power: float,
        noise_var: float,
        ref_range_m: float = 1.0,
        pathloss_exp: float = 3.0,
    ) -> "Scenario":
        """Build a scenario whose gain follows the log-distance path-loss law."""
        xi = channel_gain(range_m, ref_range_m, pathloss_exp, geometry.carrier_freq)
        return cls(
            theta=theta,
            xi=complex(xi),
            noise_var=noise_var,
            tx_power=tx_power,
            range_m=range_m,
            ref_range_m=ref_range_m,
            pathloss_exp=pathloss_exp,
        )


@dataclass(frozen=True)
class PilotSchedule:
    """Fixed per-slot beamformers reused over ``Q`` blocks of random symbols."""

    beamformers: np.ndarray
    symbols: np.ndarray

    def __post_init__(self):
        bf = np.asarray(self.beamformers, dtype=complex)
        sym = np.asarray(self.symbols, dtype=complex).ravel()
        if bf.ndim != 2:
            raise ValueError(f"beamformers must be (L, M), got shape {bf.shape}")
        if sym.size < 1:
            raise ValueError("at least one block symbol is required")
        object.__setattr__(self, "beamformers", bf)
        object.__setattr__(self, "symbols", sym)

    @property
    def num_slots(self) -> int:
        return self.beamformers.shape[0]

    @property
    def num_blocks(self) -> int:
        return self.symbols.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.beamformers.shape[1]

    @property
    def num_observations(self) -> int:
        return self.num_slots * self.num_blocks

    def pilot_matrix(self, q: int) -> np.ndarray:
        """``X^(q)``: row ``l`` is ``c^(q) * x_l^T``, shape ``(L, M)``."""
        return self.symbols[q] * self.beamformers

    def pilot_matrices(self) -> np.ndarray:
        """All blocks stacked, shape ``(Q, L, M)``."""
        return self.symbols[:, None, None] * self.beamformers[None]

    def stacked_response(self, a: np.ndarray) -> np.ndarray:
        """``b = [X^(1) a; ...; X^(Q) a]`` of length ``Q*L`` (block-major)."""
        return np.kron(self.symbols, self.beamformers @ a)


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """ULA response ``a_m = exp(-j 2 pi m (d/lambda) cos theta)``.

    ``theta`` may be an array; the antenna index is then the leading axis,
    giving shape ``(M,) + theta.shape``.
    """
    m = np.arange(geometry.num_antennas).reshape((-1,) + (1,) * np.ndim(theta))
    return np.exp(-2j * np.pi * geometry.spacing * m * np.cos(theta))


def steering_derivative(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """Elementwise d a / d theta, same shape convention as :func:`steering_vector`."""
    m = np.arange(geometry.num_antennas).reshape((-1,) + (1,) * np.ndim(theta))
    phase_rate = 2j * np.pi * geometry.spacing * m * np.sin(theta)
    return phase_rate * steering_vector(geometry, theta)


def channel_gain(r: float, r0: float, gamma: float, f_c: float) -> float:
    """Log-distance LoS amplitude gain ``sqrt((c/(4 pi f_c r0))^2 (r0/r)^gamma)``."""
    if not r0 > 0:
        raise ValueError(f"reference range must be positive, got {r0}")
    if not f_c > 0:
        raise ValueError(f"carrier frequency must be positive, got {f_c}")
    if r < r0:
        raise ValueError(f"range {r} is below the reference range {r0}")
    free_space = SPEED_OF_LIGHT / (4 * np.pi * f_c * r0)
    return float(np.sqrt(free_space**2 * (r0 / r) ** gamma))


def noise_variance(psd_dbm_per_hz: float, bandwidth_hz: float) -> float:
    """Total noise power in watts for a flat PSD given in dBm/Hz."""
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth must be positive")
    return float(10 ** ((psd_dbm_per_hz + 10 * np.log10(bandwidth_hz) - 30) / 10))


def dbm_to_watts(p_dbm: float) -> float:
    return float(10 ** ((p_dbm - 30) / 10))


def watts_to_dbm(p_w: float) -> float:
    return float(10 * np.log10(p_w) + 30)


def make_beamformers(power: float, num_antennas: int, phases: np.ndarray) -> np.ndarray:
    """Constant-modulus beamformers ``sqrt(P/M) exp(j pi phases)``.

    ``phases`` is ``(L, M)``; every returned row has squared norm ``P``.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.ndim != 2 or phases.shape[1] != num_antennas:
        raise ValueError(f"phases must be (L, {num_antennas}), got {phases.shape}")
    if not power > 0:
        raise ValueError("power must be positive")
    return np.sqrt(power / num_antennas) * np.exp(1j * np.pi * phases)


def random_phases(rng: np.random.Generator, num_slots: int, num_antennas: int) -> np.ndarray:
    """Beamformer phases drawn uniformly on [0, 2) (units of pi)."""
    return rng.uniform(0.0, 2.0, size=(num_slots, num_antennas))


def complex_normal(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, var) samples, each component N(0, var/2)."""
    scale = np.sqrt(var / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def random_symbols(rng: np.random.Generator, num_blocks: int) -> np.ndarray:
    return complex_normal(rng, num_blocks)


def random_schedule(
    rng: np.random.Generator, power: float, num_antennas: int, num_slots: int, num_blocks: int
) -> PilotSchedule:
    """Random-phase beamformers plus CN(0, 1) block symbols."""
    bf = make_beamformers(power, num_antennas, random_phases(rng, num_slots, num_antennas))
    return PilotSchedule(bf, random_symbols(rng, num_blocks))


def noiseless_observations(
    geometry: ArrayGeometry, scenario: Scenario, schedule: PilotSchedule
) -> np.ndarray:
    """``xi X^(q) a(theta)`` for every block, shape ``(L, Q)``."""
    _check_dims(geometry, schedule)
    a = steering_vector(geometry, scenario.theta)
    return scenario.xi * np.outer(schedule.beamformers @ a, schedule.symbols)


def simulate_observations(
    geometry: ArrayGeometry,
    scenario: Scenario,
    schedule: PilotSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received pilots over all blocks, shape ``(L, Q)``."""
    mean = noiseless_observations(geometry, scenario, schedule)
    if scenario.noise_var == 0:
        return mean
    return mean + complex_normal(rng, mean.shape, scenario.noise_var)


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """``(1/Q) sum_q y_q y_q^H`` of an ``(L, Q)`` observation matrix."""
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise ValueError(f"Y must be (L, Q) with Q >= 1, got {Y.shape}")
    C = Y @ Y.conj().T / Y.shape[1]
    return (C + C.conj().T) / 2


def vec(Y: np.ndarray) -> np.ndarray:
    """Column-major vectorization (slot index fastest)."""
    return np.asarray(Y).T.reshape(-1)


def _check_dims(geometry: ArrayGeometry, schedule: PilotSchedule) -> None:
    if schedule.num_antennas != geometry.num_antennas:
        raise ValueError(
            f"beamformer length {schedule.num_antennas} does not match "
            f"{geometry.num_antennas} antennas"
        )
