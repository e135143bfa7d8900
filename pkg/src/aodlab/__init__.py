"""Angle-of-departure estimation at a single-antenna downlink receiver."""

from .signal_model import (
    ArrayGeometry,
    PilotSchedule,
    Scenario,
    channel_gain,
    make_beamformers,
    noise_variance,
    sample_covariance,
    simulate_observations,
    steering_derivative,
    steering_vector,
)
from .ml import DmlFit, SmlFit, dml_estimate, model_covariance, sml_estimate, sml_nll
from .search import GridConfig

__version__ = "0.1.0"
