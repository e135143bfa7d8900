"""Compact convolutional estimator ``f(X, Y; W) -> (theta, sigma2, xi)``.

Layout: conv 3x3 (8) -> softplus -> avgpool 2x2 -> conv 3x3 (16) ->
softplus -> avgpool 2x2 -> flatten -> fc (128) -> softplus -> fc (128) ->
softplus -> fc (3), followed by range squashing of the three head outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

PARAM_ORDER = (
    "conv1.w", "conv1.b", "conv2.w", "conv2.b",
    "fc1.w", "fc1.b", "fc2.w", "fc2.b",
    "head.w", "head.b",
)


@dataclass(frozen=True)
class NetworkConfig:
    num_antennas: int
    num_slots: int
    num_blocks: int
    scale_sigma: float
    scale_xi: float
    channels: tuple[int, int] = (8, 16)
    hidden: int = 128
    spacing: float = 0.5
    # input standardization, applied to Y rows and X rows respectively
    y_scale: float = 1.0
    x_scale: float = 1.0

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (2, self.num_antennas + 1, self.num_slots * self.num_blocks)

    @property
    def flat_size(self) -> int:
        h, w = self.input_shape[1:]
        for _ in range(2):
            h, w = -(-h // 2), -(-w // 2)
        return self.channels[1] * h * w

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        c1, c2 = self.channels
        return {
            "conv1.w": (c1, 2, 3, 3),
            "conv1.b": (c1,),
            "conv2.w": (c2, c1, 3, 3),
            "conv2.b": (c2,),
            "fc1.w": (self.hidden, self.flat_size),
            "fc1.b": (self.hidden,),
            "fc2.w": (self.hidden, self.hidden),
            "fc2.b": (self.hidden,),
            "head.w": (3, self.hidden),
            "head.b": (3,),
        }


@dataclass
class NetworkParameters:
    """Weights plus the optimizer's moment accumulators and step count."""

    config: NetworkConfig
    weights: dict[str, np.ndarray]
    moment1: dict[str, np.ndarray] = field(default_factory=dict)
    moment2: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.moment1.items()},
            {k: v.copy() for k, v in self.moment2.items()},
            self.step,
        )

    def num_weights(self) -> int:
        return sum(v.size for v in self.weights.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.weights.values())


def init_params(config: NetworkConfig, rng: np.random.Generator) -> NetworkParameters:
    """Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights = {}
    shapes = config.param_shapes()
    for name in PARAM_ORDER:
        layer = name.split(".")[0]
        fan_in = int(np.prod(shapes[layer + ".w"][1:]))
        bound = 1.0 / math.sqrt(fan_in)
        weights[name] = rng.uniform(-bound, bound, size=shapes[name])
    return NetworkParameters(config, weights)


def zero_head(params: NetworkParameters) -> NetworkParameters:
    out = params.copy()
    out.weights["head.w"][:] = 0.0
    out.weights["head.b"][:] = 0.0
    return out


def forward_tape(params: NetworkParameters, S: np.ndarray):
    """Forward pass that records a tape.

    Returns ``(tape, leaves, (theta, sigma2, xi))`` where ``leaves`` maps
    parameter names to :class:`~aodlab.nn.autodiff.Var` leaves.
    """
    cfg = params.config
    S = np.asarray(S, dtype=float)
    if S.ndim == 3:
        S = S[None]
    if S.shape[1:] != cfg.input_shape:
        raise ValueError(f"input shape {S.shape[1:]} does not match {cfg.input_shape}")
    tape = ad.Tape()
    leaves = {name: ad.Var(params.weights[name]) for name in PARAM_ORDER}
    h = ad.Var(S, needs_grad=False)
    h = ad.avg_pool2x2(tape, ad.softplus(tape, ad.conv2d(tape, h, leaves["conv1.w"], leaves["conv1.b"])))
    h = ad.avg_pool2x2(tape, ad.softplus(tape, ad.conv2d(tape, h, leaves["conv2.w"], leaves["conv2.b"])))
    h = ad.flatten(tape, h)
    h = ad.softplus(tape, ad.linear(tape, h, leaves["fc1.w"], leaves["fc1.b"]))
    h = ad.softplus(tape, ad.linear(tape, h, leaves["fc2.w"], leaves["fc2.b"]))
    z = ad.linear(tape, h, leaves["head.w"], leaves["head.b"])
    theta = ad.scale(tape, ad.logistic(tape, ad.column(tape, z, 0)), math.pi / 2)
    sigma2 = ad.scale(tape, ad.softplus(tape, ad.column(tape, z, 1)), cfg.scale_sigma)
    xi = ad.scale(tape, ad.softplus(tape, ad.column(tape, z, 2)), cfg.scale_xi)
    return tape, leaves, (theta, sigma2, xi)


def forward(params: NetworkParameters, S: np.ndarray):
    """Estimates ``(theta, sigma2, xi)`` as arrays over the batch."""
    _, _, outs = forward_tape(params, S)
    return tuple(o.value for o in outs)
