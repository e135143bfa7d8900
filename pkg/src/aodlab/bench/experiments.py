"""Monte Carlo sweeps over transmit power and slot count, run-time table, SCRLB curve.

Each trial draws from its own stream seeded by ``(seed, trial)``, so trial
``t`` sees the same angle, symbols and unit-variance noise shapes at every
sweep point (common random numbers) and results never depend on worker
count or scheduling. Beamformer phases are drawn once per slot count.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import dft_estimate, esprit_estimate, music_estimate
from ..crlb import SingularFisherError, crlb_theta, fisher_information
from ..ml import dml_estimate, sml_estimate
from ..search import GridConfig
from ..signal_model import (
    ArrayGeometry,
    PilotSchedule,
    Scenario,
    channel_gain,
    complex_normal,
    dbm_to_watts,
    make_beamformers,
    noise_variance,
    random_phases,
    steering_vector,
)
from .config import ConfigError, ExperimentConfig

CSV_HEADER = ("method", "sweep_param", "sweep_value", "trials", "mae_deg", "rmse_deg", "mean_runtime_s", "seed")
ESTIMATORS = ("dml", "sml", "dft", "music", "esprit", "nn_dml", "nn_sml")
_BEAMFORMER_STREAM = 0xBEA3


class ModelMissingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Row:
    method: str
    sweep_param: str
    sweep_value: float
    trials: int
    mae_deg: float | None
    rmse_deg: float | None
    mean_runtime_s: float | None
    seed: int


@dataclass
class SweepResult:
    rows: list[Row] = field(default_factory=list)
    # absolute errors in degrees per (method, sweep_value)
    errors: dict[tuple[str, float], np.ndarray] = field(default_factory=dict)

    def row(self, method: str, value: float) -> Row:
        for r in self.rows:
            if r.method == method and r.sweep_value == value:
                return r
        raise KeyError((method, value))

    def mae(self, method: str, value: float) -> float:
        return self.row(method, value).mae_deg

    def stderr(self, method: str, value: float) -> float:
        e = self.errors[(method, value)]
        return float(np.std(e, ddof=1) / math.sqrt(e.size)) if e.size > 1 else math.inf


@dataclass(frozen=True)
class PointSetup:
    """Everything fixed at one sweep point."""

    geometry: ArrayGeometry
    power: float
    noise_var: float
    beamformers: np.ndarray
    num_blocks: int
    grid: GridConfig
    # optional pilot codebook: beamformer sets (K, L, M) at this power, symbol sets (J, Q)
    codebook: tuple[np.ndarray, np.ndarray] | None = None


def point_setup(cfg: ExperimentConfig, power_dbm: float, num_slots: int) -> PointSetup:
    geometry = ArrayGeometry(cfg.num_antennas, cfg.spacing, cfg.carrier_freq_hz)
    power = dbm_to_watts(power_dbm)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _BEAMFORMER_STREAM, num_slots]))
    bf = make_beamformers(power, cfg.num_antennas, random_phases(rng, num_slots, cfg.num_antennas))
    codebook = None
    if cfg.pilot_codebook:
        codebook = load_codebook(_model_path(cfg.pilot_codebook, num_slots), power, cfg.num_antennas,
                                 num_slots, cfg.num_blocks)
    return PointSetup(
        geometry=geometry,
        power=power,
        noise_var=noise_variance(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz),
        beamformers=bf,
        num_blocks=cfg.num_blocks,
        grid=GridConfig(num_points=cfg.grid_points, refine_tol=cfg.refine_tol),
        codebook=codebook,
    )


def load_codebook(path: str, power: float, num_antennas: int, num_slots: int, num_blocks: int):
    """Pilot sets a model was trained on, rescaled to ``power``."""
    from ..nn.modelfile import ModelFormatError, read_codebook, read_header

    if not Path(path).is_file():
        raise ModelMissingError(f"pilot codebook model file not found: {path!r}")
    try:
        phases, symbols = read_codebook(read_header(path))
    except ModelFormatError as exc:
        raise ModelMissingError(str(exc)) from exc
    if phases.shape[1:] != (num_slots, num_antennas) or symbols.shape[1] != num_blocks:
        raise ConfigError(
            f"codebook pilots are (L, M, Q) = ({phases.shape[1]}, {phases.shape[2]}, {symbols.shape[1]}), "
            f"experiment uses ({num_slots}, {num_antennas}, {num_blocks})"
        )
    bf = np.stack([make_beamformers(power, num_antennas, p) for p in phases])
    return bf, symbols


@dataclass(frozen=True)
class TrialData:
    scenario: Scenario
    schedule: PilotSchedule
    Y: np.ndarray
    Z: np.ndarray


def draw_trial(cfg: ExperimentConfig, setup: PointSetup, trial: int) -> TrialData:
    """Simulate downlink pilots and the uplink dual snapshots for one trial.

    With a pilot codebook, the trial's beamformers and symbols are picked
    from it instead of the per-point beamformers and fresh symbols.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial]))
    beamformers = setup.beamformers
    L, Q = beamformers.shape[0], setup.num_blocks
    theta = rng.uniform(0.0, math.pi / 2)
    range_m = rng.uniform(20.0, 50.0)
    symbols = complex_normal(rng, Q)
    w = complex_normal(rng, (L, Q))
    s = complex_normal(rng, Q)
    n = complex_normal(rng, (L, Q))
    if setup.codebook is not None:
        bf_sets, sym_sets = setup.codebook
        beamformers = bf_sets[rng.integers(len(bf_sets))]
        symbols = sym_sets[rng.integers(len(sym_sets))]
    if cfg.theta is not None:
        theta = cfg.theta
    if cfg.range_m is not None:
        range_m = cfg.range_m

    geometry = setup.geometry
    scenario = Scenario.from_geometry(geometry, theta, range_m, setup.power, setup.noise_var)
    schedule = PilotSchedule(beamformers, symbols)
    noise_amp = math.sqrt(setup.noise_var)
    a = steering_vector(geometry, theta)
    Y = scenario.xi * np.outer(beamformers @ a, symbols) + noise_amp * w
    a_up = steering_vector(ArrayGeometry(L, cfg.spacing, cfg.carrier_freq_hz), theta)
    Z = scenario.xi * np.outer(a_up, math.sqrt(setup.power) * s) + noise_amp * n
    return TrialData(scenario, schedule, Y, Z)


class NeuralEstimator:
    def __init__(self, path: str, mode: str):
        from ..nn.modelfile import load_model

        p = Path(path)
        if not path or not p.is_file():
            raise ModelMissingError(f"model file for nn_{mode} not found: {path!r}")
        self.params, self.header = load_model(p)
        self.mode = mode

    def __call__(self, schedule: PilotSchedule, Y: np.ndarray) -> float:
        from ..nn.features import batch_input_tensor, pilot_feature_matrix
        from ..nn.network import forward

        cfg = self.params.config
        if Y.shape != (cfg.num_slots, cfg.num_blocks):
            raise ModelMissingError(
                f"nn_{self.mode} model expects (L, Q) = ({cfg.num_slots}, {cfg.num_blocks}), got {Y.shape}"
            )
        X = pilot_feature_matrix(schedule.beamformers, schedule.symbols, self.mode)
        S = batch_input_tensor(X[None], Y[None], cfg.y_scale, cfg.x_scale)
        return float(forward(self.params, S)[0][0])


def _model_path(template: str, num_slots: int) -> str:
    return template.replace("{L}", str(num_slots)) if template else template


def make_estimators(cfg: ExperimentConfig, setup: PointSetup, methods) -> dict:
    geometry, grid = setup.geometry, setup.grid
    table = {
        "dml": lambda d: dml_estimate(geometry, d.schedule, d.Y, grid).theta_hat,
        "sml": lambda d: sml_estimate(geometry, d.schedule.beamformers, d.Y, grid, cfg.sml_inner_iters).theta_hat,
        "dft": lambda d: dft_estimate(geometry, d.schedule, d.Y, cfg.n_fft),
        "music": lambda d: music_estimate(d.Z, cfg.n_music, cfg.spacing, cfg.refine_tol),
        "esprit": lambda d: esprit_estimate(d.Z, cfg.spacing),
    }
    out = {}
    for m in methods:
        if m in table:
            out[m] = table[m]
        elif m in ("nn_dml", "nn_sml"):
            mode = m[3:]
            path = _model_path(getattr(cfg, f"model_{mode}"), setup.beamformers.shape[0])
            net = NeuralEstimator(path, mode)
            out[m] = lambda d, net=net: net(d.schedule, d.Y)
    return out


def run_trial(cfg: ExperimentConfig, setup: PointSetup, estimators: dict, trial: int):
    """Returns ``({method: (abs error deg, seconds)}, crlb variance or None)``."""
    data = draw_trial(cfg, setup, trial)
    out = {}
    for name, est in estimators.items():
        t0 = time.perf_counter()
        theta_hat = est(data)
        elapsed = time.perf_counter() - t0
        out[name] = (abs(math.degrees(theta_hat - data.scenario.theta)), elapsed)
    try:
        bound = crlb_theta(fisher_information(setup.geometry, data.scenario, data.schedule))
    except SingularFisherError:
        bound = None
    return out, bound


def _run_chunk(args):
    cfg, power_dbm, num_slots, methods, trials = args
    setup = point_setup(cfg, power_dbm, num_slots)
    estimators = make_estimators(cfg, setup, methods)
    return [run_trial(cfg, setup, estimators, t) for t in trials]


def run_point(cfg: ExperimentConfig, power_dbm: float, num_slots: int, methods, num_trials: int):
    """All trials at one sweep point, in trial order regardless of worker count."""
    trials = list(range(num_trials))
    if cfg.workers == 1 or num_trials == 1:
        return _run_chunk((cfg, power_dbm, num_slots, methods, trials))
    chunks = [trials[i :: cfg.workers] for i in range(cfg.workers)]
    with ProcessPoolExecutor(cfg.workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, power_dbm, num_slots, methods, c) for c in chunks]))
    merged = [None] * num_trials
    for chunk, part in zip(chunks, parts):
        for t, res in zip(chunk, part):
            merged[t] = res
    return merged


def _aggregate(result: SweepResult, cfg, methods, sweep_param, value, outcomes, runtime_stat=np.mean):
    for m in methods:
        if m not in ESTIMATORS:
            continue
        errs = np.array([o[0][m][0] for o in outcomes])
        secs = np.array([o[0][m][1] for o in outcomes])
        result.errors[(m, value)] = errs
        result.rows.append(Row(
            m, sweep_param, value, len(errs),
            float(np.mean(errs)), float(np.sqrt(np.mean(errs**2))), float(runtime_stat(secs)), cfg.seed,
        ))
    if "scrlb" in methods:
        bounds = [o[1] for o in outcomes]
        scrlb = None if any(b is None for b in bounds) else math.degrees(math.sqrt(float(np.mean(bounds))))
        result.rows.append(Row("scrlb", sweep_param, value, len(bounds), scrlb, scrlb, None, cfg.seed))


def _sweep(cfg: ExperimentConfig, sweep_param: str, methods) -> SweepResult:
    result = SweepResult()
    for value in cfg.sweep_values:
        if sweep_param == "P_dbm":
            power_dbm, num_slots = float(value), cfg.num_slots
        else:
            power_dbm, num_slots = cfg.tx_power_dbm, int(value)
        outcomes = run_point(cfg, power_dbm, num_slots, methods, cfg.trials)
        _aggregate(result, cfg, methods, sweep_param, float(value), outcomes)
    return result


def run_mae_vs_power(cfg: ExperimentConfig) -> SweepResult:
    return _sweep(cfg, "P_dbm", cfg.methods)


def run_mae_vs_slots(cfg: ExperimentConfig) -> SweepResult:
    return _sweep(cfg, "L", cfg.methods)


def run_scrlb_curve(cfg: ExperimentConfig) -> SweepResult:
    return _sweep(cfg, cfg.sweep_param, ("scrlb",))


def run_runtime_table(cfg: ExperimentConfig) -> SweepResult:
    """Median per-estimate wall clock over ``runtime_repeats`` trials, per method.

    The ``mean_runtime_s`` column carries the median for this experiment.
    """
    methods = [m for m in cfg.methods if m in ESTIMATORS]
    k = cfg.runtime_repeats
    result = SweepResult()
    setup = point_setup(cfg, cfg.tx_power_dbm, cfg.num_slots)
    estimators = make_estimators(cfg, setup, methods)
    # one untimed pass so first-call overheads do not land in the table
    run_trial(cfg, setup, estimators, 0)
    outcomes = [run_trial(cfg, setup, estimators, t) for t in range(k)]
    _aggregate(result, cfg, methods, "runtime_repeats", float(k), outcomes, runtime_stat=np.median)
    return result


@dataclass(frozen=True)
class TrainOutcome:
    model_path: Path
    curve_path: Path
    untrained_mae_deg: float
    test_mae_deg: float


def run_train(cfg: ExperimentConfig) -> TrainOutcome:
    """Generate the enumerated dataset, train one mode, write model and curve.

    The dataset is drawn from ``seed``, the split from ``seed + 1`` and the
    initialization and batch order from ``seed + 2``.
    """
    from ..nn.dataset import DatasetSpec, generate_dataset, split_dataset
    from ..nn.features import Mode
    from ..nn.modelfile import codebook_extra, save_model
    from ..nn.network import init_params
    from ..nn.training import TrainConfig, evaluate_mae, network_config_for, train

    mode = Mode(cfg.train_mode)
    spec = DatasetSpec(
        num_thetas=cfg.num_thetas, num_ranges=cfg.num_ranges,
        num_beamformer_sets=cfg.num_beamformer_sets, num_symbol_sets=cfg.num_symbol_sets,
        num_noise=cfg.num_noise, num_test=cfg.num_test,
        num_antennas=cfg.num_antennas, num_slots=cfg.num_slots, num_blocks=cfg.num_blocks,
        spacing=cfg.spacing, carrier_freq=cfg.carrier_freq_hz, tx_power_dbm=cfg.tx_power_dbm,
        noise_psd_dbm_hz=cfg.noise_psd_dbm_hz, bandwidth_hz=cfg.bandwidth_hz,
    )
    dataset = generate_dataset(spec, cfg.seed)
    trainset, testset = split_dataset(dataset, spec.num_test, cfg.seed + 1)
    net_config = network_config_for(spec, trainset, mode)
    tcfg = TrainConfig(
        mode, learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay,
        batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed + 2,
        grad_clip_norm=cfg.grad_clip_norm, warm_start_epochs=cfg.warm_start_epochs,
        warm_start_lr=cfg.warm_start_lr,
    )
    init = init_params(net_config, np.random.default_rng(tcfg.seed))
    untrained = evaluate_mae(init, testset, mode) if len(testset) else math.nan
    result = train(trainset, tcfg, net_config, init=init)
    test_mae = evaluate_mae(result.params, testset, mode) if len(testset) else math.nan

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = save_model(
        out / f"model_{mode.value}.aodnn", result.params, tcfg.to_dict(),
        extra={
            "dataset_seed": cfg.seed, "num_train": len(trainset), "num_test": len(testset),
            "codebook": codebook_extra(dataset.beamformers, dataset.symbols),
        },
    )
    curve_path = out / f"train_{mode.value}_curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch", "phase", "loss"))
        for r in result.history:
            writer.writerow((r.epoch, r.phase, repr(float(r.loss))))
    return TrainOutcome(model_path, curve_path, untrained, test_mae)


def format_csv(result: SweepResult, timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in result.rows:
        writer.writerow([
            r.method, r.sweep_param, _num(r.sweep_value), r.trials,
            _num(r.mae_deg), _num(r.rmse_deg),
            _num(r.mean_runtime_s) if timing else "", r.seed,
        ])
    return buf.getvalue()


def write_csv(result: SweepResult, path, timing: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(result, timing))
    return path


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))
