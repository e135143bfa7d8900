"""Experiment configuration files.

Plain ``key = value`` text under an ``[experiment]`` header, ``#`` comments.
Powers are given in dBm and angles in degrees here; everything is
converted to watts / radians when the config is turned into physics.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

KINDS = ("mae_vs_power", "mae_vs_slots", "runtime", "scrlb_curve", "train")
METHODS = ("dml", "sml", "dft", "music", "esprit", "nn_dml", "nn_sml", "scrlb")
SECTION = "experiment"


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "mae_vs_power"
    sweep_values: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    # scrlb_curve only: which quantity the sweep varies, "P_dbm" or "L"
    sweep_param: str = "P_dbm"
    theta_deg: float | None = 23.4  # None means uniform on (0, 90)
    range_m: float | None = 32.1  # None means uniform on [20, 50]
    tx_power_dbm: float = 15.0
    num_antennas: int = 8
    num_slots: int = 6
    num_blocks: int = 4
    spacing: float = 0.5
    carrier_freq_hz: float = 28e9
    noise_psd_dbm_hz: float = -165.0
    bandwidth_hz: float = 1.2e5
    trials: int = 500
    methods: tuple[str, ...] = ("dml", "sml", "dft", "music", "esprit", "scrlb")
    seed: int = 0
    out_dir: str = "results"
    n_fft: int = 256
    n_music: int = 256
    grid_points: int = 512
    refine_tol: float = 1e-5
    sml_inner_iters: int = 4
    model_dml: str = ""
    model_sml: str = ""
    # model file whose training pilot sets replace the random pilots (empty: random)
    pilot_codebook: str = ""
    runtime_repeats: int = 21
    workers: int = 1
    # train only
    train_mode: str = "dml"
    num_thetas: int = 20
    num_ranges: int = 22
    num_beamformer_sets: int = 2
    num_symbol_sets: int = 2
    num_noise: int = 3
    num_test: int = 480
    epochs: int = 160
    warm_start_epochs: int = 60
    learning_rate: float = 3e-4
    warm_start_lr: float = 2e-3
    weight_decay: float = 1e-4
    batch_size: int = 256
    grad_clip_norm: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.sweep_values:
            raise ConfigError("sweep_values must not be empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if self.sweep_param not in ("P_dbm", "L"):
            raise ConfigError("sweep_param must be P_dbm or L")
        if self.train_mode not in ("dml", "sml"):
            raise ConfigError("train_mode must be dml or sml")
        if self.num_slots < 1 or self.num_blocks < 1 or self.num_antennas < 1:
            raise ConfigError("array and pilot dimensions must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def theta(self) -> float | None:
        return None if self.theta_deg is None else math.radians(self.theta_deg)


DEFAULTS = {
    "mae_vs_power": ExperimentConfig(),
    "mae_vs_slots": ExperimentConfig(
        kind="mae_vs_slots", sweep_values=(2, 3, 4, 6, 8, 12), tx_power_dbm=15.0,
    ),
    "runtime": ExperimentConfig(
        kind="runtime", sweep_values=(15.0,), trials=21,
        methods=("dml", "sml", "dft", "music", "esprit"),
    ),
    "scrlb_curve": ExperimentConfig(kind="scrlb_curve", methods=("scrlb",), trials=500),
    "train": ExperimentConfig(kind="train", sweep_values=(15.0,), methods=("dml",)),
}

_TUPLE_FIELDS = {"sweep_values": float, "methods": str}
_OPTIONAL_FLOATS = {"theta_deg", "range_m"}


def _parse_value(name: str, raw: str, default):
    raw = raw.strip()
    if name in _TUPLE_FIELDS:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        return tuple(_TUPLE_FIELDS[name](x) for x in items)
    if name in _OPTIONAL_FLOATS:
        return None if raw.lower() == "random" else float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse config text; ``kind`` (from the command line) selects the defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not parser.has_section(SECTION):
        raise ConfigError(f"missing [{SECTION}] section")
    items = dict(parser.items(SECTION))
    file_kind = items.pop("kind", None)
    if kind and file_kind and file_kind.strip() != kind:
        raise ConfigError(f"config is for {file_kind.strip()!r}, not {kind!r}")
    kind = kind or (file_kind.strip() if file_kind else "mae_vs_power")
    if kind not in DEFAULTS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base = DEFAULTS[kind]
    known = {f.name: f for f in fields(ExperimentConfig)}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _parse_value(key, raw, getattr(base, key))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return replace(base, **updates)


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, kind)


def format_config(cfg: ExperimentConfig) -> str:
    """Render a config as a file that :func:`parse_config` reads back identically."""
    lines = [f"[{SECTION}]"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            text = "random"
        elif isinstance(value, tuple):
            text = ", ".join(_fmt(v) for v in value)
        else:
            text = _fmt(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
