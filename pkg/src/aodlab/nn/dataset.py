"""Enumerated training / test sets of received pilots.

Every combination of angle, range, beamformer set, symbol set and noise
draw becomes one sample. Ground-truth labels live in a separate
:class:`Labels` object; training code only ever sees ``(X, Y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..signal_model import (
    ArrayGeometry,
    channel_gain,
    complex_normal,
    dbm_to_watts,
    make_beamformers,
    noise_variance,
    random_phases,
    random_symbols,
    steering_vector,
)
from .features import Mode, pilot_feature_matrix


@dataclass(frozen=True)
class DatasetSpec:
    num_thetas: int = 20
    num_ranges: int = 22
    num_beamformer_sets: int = 2
    num_symbol_sets: int = 2
    num_noise: int = 3
    num_test: int = 480
    num_antennas: int = 8
    num_slots: int = 6
    num_blocks: int = 4
    spacing: float = 0.5
    carrier_freq: float = 28e9
    tx_power_dbm: float = 15.0
    theta_range: tuple[float, float] = (0.0, math.pi / 2)
    range_m: tuple[float, float] = (20.0, 50.0)
    ref_range_m: float = 1.0
    pathloss_exp: float = 3.0
    noise_psd_dbm_hz: float = -165.0
    bandwidth_hz: float = 1.2e5

    def __post_init__(self):
        counts = (
            self.num_thetas, self.num_ranges, self.num_beamformer_sets,
            self.num_symbol_sets, self.num_noise,
        )
        if min(counts) < 1:
            raise ValueError("every enumeration count must be >= 1")
        if not 0 <= self.num_test < self.size:
            raise ValueError(f"num_test must lie in [0, {self.size})")

    @property
    def size(self) -> int:
        return (
            self.num_thetas * self.num_ranges * self.num_beamformer_sets
            * self.num_symbol_sets * self.num_noise
        )

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.num_antennas, self.spacing, self.carrier_freq)

    @property
    def noise_var(self) -> float:
        return noise_variance(self.noise_psd_dbm_hz, self.bandwidth_hz)

    @property
    def tx_power(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)


# paper-scale enumeration: 200 angles x 220 ranges x 5 beamformer sets x 5 symbol sets
PAPER_SPEC = DatasetSpec(200, 220, 5, 5, 1, num_test=100_000)
DESK_SPEC = DatasetSpec()


@dataclass(frozen=True)
class Labels:
    theta: np.ndarray
    range_m: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Observations plus the pilot information needed to build either feature.

    ``Y`` is ``(N, L, Q)``; ``beamformers`` ``(N, L, M)``; ``symbols`` ``(N, Q)``.
    """

    Y: np.ndarray
    beamformers: np.ndarray
    symbols: np.ndarray
    labels: Labels = field(repr=False)
    spacing: float = 0.5

    def __len__(self) -> int:
        return self.Y.shape[0]

    def features(self, mode: Mode) -> np.ndarray:
        """Pilot features ``(N, M, QL)`` for the given information level."""
        return pilot_feature_matrix(self.beamformers, self.symbols, mode)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        lab = self.labels
        return Dataset(
            self.Y[index],
            self.beamformers[index],
            self.symbols[index],
            Labels(lab.theta[index], lab.range_m[index], lab.xi[index]),
            self.spacing,
        )


def generate_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    """Enumerate all combinations in the order angle, range, beamformers, symbols, noise."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    theta_rng, range_rng, bf_rng, sym_rng, noise_rng = streams
    geometry = spec.geometry
    thetas = theta_rng.uniform(*spec.theta_range, size=spec.num_thetas)
    ranges = range_rng.uniform(*spec.range_m, size=spec.num_ranges)
    bf_sets = np.stack([
        make_beamformers(spec.tx_power, spec.num_antennas,
                         random_phases(bf_rng, spec.num_slots, spec.num_antennas))
        for _ in range(spec.num_beamformer_sets)
    ])
    sym_sets = np.stack([random_symbols(sym_rng, spec.num_blocks) for _ in range(spec.num_symbol_sets)])
    gains = np.array([
        channel_gain(r, spec.ref_range_m, spec.pathloss_exp, spec.carrier_freq) for r in ranges
    ])

    grid = np.meshgrid(
        np.arange(spec.num_thetas), np.arange(spec.num_ranges),
        np.arange(spec.num_beamformer_sets), np.arange(spec.num_symbol_sets),
        np.arange(spec.num_noise), indexing="ij",
    )
    ti, ri, bi, si, _ = (g.ravel() for g in grid)

    a = steering_vector(geometry, thetas).T  # (num_thetas, M)
    slot = np.einsum("blm,tm->tbl", bf_sets, a)  # x_l^T a(theta)
    mean = gains[ri, None, None] * slot[ti, bi][:, :, None] * sym_sets[si][:, None, :]
    Y = mean + complex_normal(noise_rng, mean.shape, spec.noise_var)
    labels = Labels(thetas[ti], ranges[ri], gains[ri].astype(complex))
    return Dataset(Y, bf_sets[bi], sym_sets[si], labels, spec.spacing)


def split_dataset(dataset: Dataset, num_test: int, seed: int) -> tuple[Dataset, Dataset]:
    """Random train/test split without replacement."""
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.subset(np.sort(perm[num_test:])), dataset.subset(np.sort(perm[:num_test]))
