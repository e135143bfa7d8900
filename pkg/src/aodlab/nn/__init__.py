"""Unsupervised neural AoD estimator trained on the DML / SML likelihoods."""

from .dataset import DESK_SPEC, PAPER_SPEC, Dataset, DatasetSpec, Labels, generate_dataset, split_dataset
from .features import Mode, PilotFeature, build_input_tensor, build_pilot_feature, unpack_input_tensor
from .losses import backward, dml_loss, sml_loss
from .modelfile import load_model, save_model
from .network import NetworkConfig, NetworkParameters, forward, init_params
from .optim import optimizer_step
from .training import TrainConfig, TrainResult, evaluate_mae, predict, train

__all__ = [
    "DESK_SPEC", "PAPER_SPEC", "Dataset", "DatasetSpec", "Labels", "generate_dataset",
    "split_dataset", "Mode", "PilotFeature", "build_input_tensor", "build_pilot_feature",
    "unpack_input_tensor", "backward", "dml_loss", "sml_loss", "load_model", "save_model",
    "NetworkConfig", "NetworkParameters", "forward", "init_params", "optimizer_step",
    "TrainConfig", "TrainResult", "evaluate_mae", "predict", "train",
]
