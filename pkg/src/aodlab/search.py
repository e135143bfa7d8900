"""Bracketing line searches shared by the grid estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GridConfig:
    """Angle search grid on ``[theta_lo, theta_hi]``.

    Grid points sit at cell centres, so neither endpoint is evaluated.
    """

    theta_lo: float = 0.0
    theta_hi: float = math.pi / 2
    num_points: int = 512
    refine_tol: float = 1e-5

    def __post_init__(self):
        if not self.theta_lo < self.theta_hi:
            raise ValueError("theta_lo must be below theta_hi")
        if self.num_points < 2:
            raise ValueError("num_points must be at least 2")
        if not self.refine_tol > 0:
            raise ValueError("refine_tol must be positive")

    @property
    def step(self) -> float:
        return (self.theta_hi - self.theta_lo) / self.num_points

    def points(self) -> np.ndarray:
        return self.theta_lo + (np.arange(self.num_points) + 0.5) * self.step

    def bracket(self, index: int) -> tuple[float, float]:
        """Interval of the two neighbouring cells around grid point ``index``."""
        center = self.theta_lo + (index + 0.5) * self.step
        return max(self.theta_lo, center - self.step), min(self.theta_hi, center + self.step)


def golden_section(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[lo, hi]`` until the bracket is below ``tol``.

    Returns the best evaluated point and its value.
    """
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def golden_section_batch(
    f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise golden-section search over independent brackets.

    ``f`` maps an array of abscissae to objective values of the same shape.
    Iterates until the widest bracket is below ``tol``.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while np.max(b - a) > tol:
        left = fc <= fd
        # left: keep [a, d]; right: keep [c, b]
        new_a = np.where(left, a, c)
        new_b = np.where(left, d, b)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        probe = np.where(left, new_b - INV_PHI * (new_b - new_a), new_a + INV_PHI * (new_b - new_a))
        fprobe = f(probe)
        a, b = new_a, new_b
        c = np.where(left, probe, keep)
        fc = np.where(left, fprobe, fkeep)
        d = np.where(left, keep, probe)
        fd = np.where(left, fkeep, fprobe)
    better_c = fc <= fd
    return np.where(better_c, c, d), np.where(better_c, fc, fd)
