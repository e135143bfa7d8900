"""Mini-batch training of the estimator network and MAE evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..ml import dml_estimate, sml_estimate
from ..search import GridConfig
from ..signal_model import ArrayGeometry, PilotSchedule, channel_gain, noise_variance
from .dataset import Dataset, DatasetSpec
from .features import Mode, batch_input_tensor
from .losses import backward
from .network import NetworkConfig, NetworkParameters, forward, init_params
from .optim import optimizer_step

log = logging.getLogger(__name__)

PSEUDO_LABEL_GRID = GridConfig(num_points=256, refine_tol=1e-4)


class TrainingDiverged(RuntimeError):
    """The loss or the weights became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode = Mode.DML
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    grad_clip_norm: float | None = 10.0
    # epochs fitting the heads to label-free model-based estimates before the ML loss
    warm_start_epochs: int = 0
    warm_start_lr: float = 2e-3

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0 <= self.warm_start_epochs <= self.epochs:
            raise ValueError("warm_start_epochs must lie in [0, epochs]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


# desk-scale recipe used by the CLI presets
DESK_TRAIN = {
    Mode.DML: TrainConfig(Mode.DML, epochs=160, warm_start_epochs=60),
    Mode.SML: TrainConfig(Mode.SML, epochs=160, warm_start_epochs=60),
}
PAPER_TRAIN = TrainConfig(batch_size=2048)


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss: float


@dataclass
class TrainResult:
    params: NetworkParameters
    history: list[EpochRecord] = field(default_factory=list)

    def ml_losses(self) -> list[float]:
        return [r.loss for r in self.history if r.phase == "ml"]


def network_config_for(spec: DatasetSpec, dataset: Dataset, mode: Mode) -> NetworkConfig:
    """Architecture dims, head scales and input standardization for a training set."""
    X = dataset.features(mode)
    return NetworkConfig(
        num_antennas=spec.num_antennas,
        num_slots=spec.num_slots,
        num_blocks=spec.num_blocks,
        scale_sigma=noise_variance(-165.0, 1.2e5),
        scale_xi=channel_gain(35.0, 1.0, 3.0, spec.carrier_freq),
        spacing=spec.spacing,
        y_scale=1.0 / math.sqrt(float(np.mean(np.abs(dataset.Y) ** 2))),
        x_scale=1.0 / math.sqrt(float(np.mean(np.abs(X) ** 2))),
    )


def pseudo_labels(X: np.ndarray, Y: np.ndarray, mode: Mode, spacing: float, grid=PSEUDO_LABEL_GRID):
    """Model-based estimates computed from ``(X, Y)`` alone.

    DML treats the whole pilot feature as one block of ``QL`` slots, which
    leaves the least-squares objective unchanged. SML reads the beamformers
    from the first ``L`` feature columns. Returns ``(theta, xi, sigma2)``;
    ``sigma2`` is NaN for DML.
    """
    n, M, _ = X.shape
    L = Y.shape[1]
    geometry = ArrayGeometry(M, spacing)
    out = np.full((3, n), np.nan)
    for i in range(n):
        if mode is Mode.DML:
            sched = PilotSchedule(X[i].T, np.ones(1))
            fit = dml_estimate(geometry, sched, Y[i].T.reshape(-1, 1), grid)
            out[:2, i] = fit.theta_hat, abs(fit.xi_hat)
        else:
            fit = sml_estimate(geometry, X[i][:, :L].T, Y[i], grid)
            out[:, i] = fit.theta_hat, math.sqrt(fit.xi2_hat), fit.sigma2_hat
    return out


def _warm_start_grads(params, S, targets, mode):
    from .network import forward_tape

    tape, leaves, outs = forward_tape(params, S)
    theta, sigma2, xi = (o.value for o in outs)
    t_theta, t_xi, t_sigma2 = targets
    n = theta.shape[0]
    cfg = params.config
    t_xi = np.maximum(t_xi, 1e-3 * cfg.scale_xi)
    e_theta = theta - t_theta
    e_xi = np.log(xi) - np.log(t_xi)
    loss = e_theta**2 + e_xi**2
    seeds = [2 * e_theta / n, np.zeros(n), 2 * e_xi / (xi * n)]
    if mode is Mode.SML:
        t_sigma2 = np.maximum(t_sigma2, 1e-3 * cfg.scale_sigma)
        e_s = np.log(sigma2) - np.log(t_sigma2)
        loss = loss + e_s**2
        seeds[1] = 2 * e_s / (sigma2 * n)
    tape.backward(list(zip(outs, seeds)))
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}
    return float(np.mean(loss)), grads


def train(
    dataset: Dataset,
    config: TrainConfig,
    net_config: NetworkConfig,
    init: NetworkParameters | None = None,
    progress=None,
) -> TrainResult:
    """Shuffled mini-batch AdamW on the mode's loss.

    The optional warm start first regresses the heads onto label-free
    model-based estimates (see :func:`pseudo_labels`). Ground-truth labels
    are never read.
    """
    mode = config.mode
    rng = np.random.default_rng(config.seed)
    params = init.copy() if init is not None else init_params(net_config, rng)
    X = dataset.features(mode)
    Y = dataset.Y
    S = batch_input_tensor(X, Y, params.config.y_scale, params.config.x_scale)
    # standardized misfit for DML keeps gradients O(1); the argmin is unchanged
    loss_scale = params.config.y_scale**2 if mode is Mode.DML else 1.0
    targets = None
    if config.warm_start_epochs:
        targets = pseudo_labels(X, Y, mode, params.config.spacing)

    result = TrainResult(params)
    n = len(dataset)
    for epoch in range(config.epochs):
        warm = epoch < config.warm_start_epochs
        lr = config.warm_start_lr if warm else config.learning_rate
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if warm:
                loss, grads = _warm_start_grads(params, S[idx], targets[:, idx], mode)
                total += loss * len(idx)
            else:
                loss, grads = backward(params, X[idx], Y[idx], mode, loss_scale)
                total += loss / loss_scale * len(idx)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            params = optimizer_step(params, grads, lr, config.weight_decay, config.grad_clip_norm)
            if not params.all_finite():
                raise TrainingDiverged(f"non-finite weights at epoch {epoch}")
        record = EpochRecord(epoch, "warm" if warm else "ml", total / n)
        result.history.append(record)
        if progress is not None:
            progress(record)
        log.debug("epoch %d %s loss %.6g", epoch, record.phase, record.loss)
    result.params = params
    return result


def predict(params: NetworkParameters, X: np.ndarray, Y: np.ndarray, batch_size: int = 1024):
    """Network estimates ``(theta, sigma2, xi)`` over a dataset, batched."""
    cfg = params.config
    outs = [[], [], []]
    for start in range(0, Y.shape[0], batch_size):
        S = batch_input_tensor(X[start : start + batch_size], Y[start : start + batch_size],
                               cfg.y_scale, cfg.x_scale)
        for o, v in zip(outs, forward(params, S)):
            o.append(v)
    return tuple(np.concatenate(o) for o in outs)


def evaluate_mae(params: NetworkParameters, testset: Dataset, mode: Mode) -> float:
    """Mean absolute angle error in degrees against the held-out labels."""
    if len(testset) == 0:
        raise ValueError("empty test set")
    theta, _, _ = predict(params, testset.features(mode), testset.Y)
    return mae_degrees(theta, testset.labels.theta)


def mae_degrees(theta_hat, theta) -> float:
    return float(np.degrees(np.mean(np.abs(np.asarray(theta_hat) - np.asarray(theta)))))


def with_standardization(cfg: NetworkConfig, y_scale: float, x_scale: float) -> NetworkConfig:
    return replace(cfg, y_scale=y_scale, x_scale=x_scale)
