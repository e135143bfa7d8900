"""Acceptance gate: one test per criterion, each recording a pass/fail line.

The lines are printed in the "acceptance criteria" section of the pytest
terminal summary. Tolerances are the contract values; nothing is relaxed.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from aodlab.baselines import esprit_estimate, music_estimate, uplink_dual_simulate
from aodlab.bench.cli import main as cli_main
from aodlab.bench.config import DEFAULTS, ExperimentConfig
from aodlab.bench.experiments import run_mae_vs_power, run_mae_vs_slots, run_runtime_table, run_train
from aodlab.ml import dml_estimate, model_covariance, sml_estimate_from_covariance
from aodlab.nn.dataset import DatasetSpec, generate_dataset, split_dataset
from aodlab.nn.features import Mode, batch_input_tensor, pilot_feature_matrix
from aodlab.nn.losses import dml_head_loss
from aodlab.nn.modelfile import load_model
from aodlab.nn.network import forward
from aodlab.nn.training import mae_degrees
from aodlab.signal_model import (
    ArrayGeometry,
    PilotSchedule,
    complex_normal,
    noiseless_observations,
    simulate_observations,
)

from conftest import ACCEPTANCE_LINES, RANGE_STAR, THETA_STAR
from test_network import finite_difference_errors, tiny_problem


def record(number, ok, detail, elapsed, limit):
    within = elapsed < limit
    verdict = "PASS" if ok and within else "FAIL"
    ACCEPTANCE_LINES[number] = (
        f"criterion {number:2d}: {verdict}  {detail}  [{elapsed:.1f} s, limit {limit:.0f} s]"
    )
    assert ok, ACCEPTANCE_LINES[number]
    assert within, ACCEPTANCE_LINES[number]


def fig2_config(**kw):
    base = dict(
        kind="mae_vs_power", theta_deg=23.4, range_m=RANGE_STAR, num_slots=6, num_blocks=4,
        trials=500, seed=0,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def paired_se(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(np.std(d, ddof=1) / math.sqrt(d.size))


# ---------------------------------------------------------------- 1


def test_criterion_01_gradient_gate():
    t0 = time.perf_counter()
    worst = {}
    for mode in ("dml", "sml"):
        params, B, c, Y = tiny_problem()
        X = pilot_feature_matrix(B, c, mode)
        worst[mode] = max(finite_difference_errors(params, X, Y, mode).values())
    ok = all(v < 1e-4 for v in worst.values())
    record(1, ok, f"max rel err dml {worst['dml']:.2e}, sml {worst['sml']:.2e} (< 1e-4)",
           time.perf_counter() - t0, 60)


# ---------------------------------------------------------------- 2


def test_criterion_02_covariance_oracle(geometry, scenario, schedule):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    blocks = PilotSchedule(schedule.beamformers, complex_normal(rng, 100_000))
    Y = simulate_observations(geometry, scenario, blocks, rng)
    C_mc = Y @ Y.conj().T / Y.shape[1]
    C = model_covariance(scenario.theta, abs(scenario.xi) ** 2, scenario.noise_var, geometry,
                         schedule.beamformers).C
    err = np.linalg.norm(C_mc - C) / np.linalg.norm(C)
    record(2, err < 0.02, f"Frobenius rel err {err:.4f} over 1e5 blocks (< 0.02)", time.perf_counter() - t0, 60)


# ---------------------------------------------------------------- 3


def test_criterion_03_noiseless_identifiability(geometry, scenario, schedule):
    t0 = time.perf_counter()
    Y = noiseless_observations(geometry, scenario, schedule)
    rng = np.random.default_rng(3)
    Z = uplink_dual_simulate(THETA_STAR, 6, 4, scenario.tx_power, 0.0, rng, gain=scenario.xi)
    C = model_covariance(scenario.theta, abs(scenario.xi) ** 2, scenario.noise_var, geometry,
                         schedule.beamformers).C
    errs = {
        "dml": abs(math.degrees(dml_estimate(geometry, schedule, Y).theta_hat - THETA_STAR)),
        "music": abs(math.degrees(music_estimate(Z, 256) - THETA_STAR)),
        "esprit": abs(math.degrees(esprit_estimate(Z) - THETA_STAR)),
        "sml": abs(math.degrees(sml_estimate_from_covariance(geometry, schedule.beamformers, C).theta_hat
                                - THETA_STAR)),
    }
    ok = max(errs["dml"], errs["music"], errs["esprit"]) < 1e-3 and errs["sml"] < 0.05
    detail = ", ".join(f"{k} {v:.1e} deg" for k, v in errs.items()) + " (< 1e-3; sml < 0.05)"
    record(3, ok, detail, time.perf_counter() - t0, 60)


# ---------------------------------------------------------------- 4


def test_criterion_04_crlb_consistency():
    t0 = time.perf_counter()
    r = run_mae_vs_power(fig2_config(sweep_values=(25.0,), trials=2000, methods=("dml", "scrlb")))
    rmse, scrlb = r.row("dml", 25.0).rmse_deg, r.mae("scrlb", 25.0)
    ratio = rmse / scrlb
    record(4, 0.9 <= ratio <= 2.0,
           f"dml RMSE {rmse:.4f} deg / SCRLB {scrlb:.4f} deg = {ratio:.3f} (in [0.9, 2.0])",
           time.perf_counter() - t0, 600)


# ---------------------------------------------------------------- 5


def test_criterion_05_power_sweep_ordering(trained_models):
    t0 = time.perf_counter()
    powers = (0.0, 5.0, 15.0, 25.0)
    classical = ("dml", "sml", "dft", "music", "esprit")
    r = run_mae_vs_power(fig2_config(sweep_values=powers, methods=classical + ("scrlb",)))
    elapsed = time.perf_counter() - t0

    problems = []
    for p in powers:
        d, s = r.errors[("dml", p)], r.errors[("sml", p)]
        if np.mean(d) > np.mean(s) + 2 * paired_se(d, s):
            problems.append(f"dml>sml at {p:g} dBm")
    for m in classical:
        for lo, hi in zip(powers, powers[1:]):
            a, b = r.errors[(m, lo)], r.errors[(m, hi)]
            if np.mean(b) > np.mean(a) + 2 * paired_se(b, a):
                problems.append(f"{m} rises {lo:g}->{hi:g} dBm")
    bound = r.mae("scrlb", 25.0)
    ratios = {m: r.mae(m, 25.0) / bound for m in classical}
    problems += [f"{m} {v:.2f}x SCRLB at 25 dBm" for m, v in ratios.items() if v > 3]

    # neural models were trained at 15 dBm on a fixed pilot codebook; reported, not gated
    models = dict(model_dml=str(trained_models["dml"].model_path),
                  model_sml=str(trained_models["sml"].model_path))
    nn_text = []
    for label, book in (("fresh pilots", ""), ("training pilots", models["model_dml"])):
        nn = run_mae_vs_power(fig2_config(sweep_values=(15.0, 25.0), methods=("nn_dml", "nn_sml"),
                                          trials=500, pilot_codebook=book, **models))
        nn_text.append(f"{label} " + ", ".join(
            f"{m} {nn.mae(m, 15.0):.2f}/{nn.mae(m, 25.0):.2f}" for m in ("nn_dml", "nn_sml")))
    nn_text = "; ".join(nn_text)
    table = "; ".join(f"{m} " + "/".join(f"{r.mae(m, p):.3f}" for p in powers) for m in classical)
    detail = (f"MAE deg at P=0/5/15/25 dBm: {table}; SCRLB@25 {bound:.4f}; "
              f"ratios@25 " + ", ".join(f"{m} {v:.2f}" for m, v in ratios.items())
              + f"; nn MAE at 15/25 dBm (ungated): {nn_text}"
              + (f"; violations: {', '.join(problems)}" if problems else ""))
    record(5, not problems, detail, elapsed, 1200)


# ---------------------------------------------------------------- 6


def test_criterion_06_sixteen_observations():
    t0 = time.perf_counter()
    c = replace(fig2_config(kind="mae_vs_slots", sweep_values=(4,), methods=("dml",)), tx_power_dbm=15.0)
    r = run_mae_vs_slots(c)
    mae = r.mae("dml", 4.0)
    record(6, mae < 1.0, f"dml MAE {mae:.4f} deg at L=4, Q=4, P=15 dBm, 500 trials (< 1)",
           time.perf_counter() - t0, 300)


# ---------------------------------------------------------------- 7


@pytest.fixture(scope="module")
def trained_models(tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    base = replace(DEFAULTS["train"], out_dir=str(out))
    t0 = time.perf_counter()
    models = {mode: run_train(replace(base, train_mode=mode)) for mode in ("dml", "sml")}
    models["elapsed"] = time.perf_counter() - t0
    models["config"] = base
    return models


def _desk_testset(cfg):
    spec = DatasetSpec()
    assert spec.size == 5280
    _, test = split_dataset(generate_dataset(spec, cfg.seed), spec.num_test, cfg.seed + 1)
    return test


def test_criterion_07_desk_training(trained_models):
    dml, sml = trained_models["dml"], trained_models["sml"]
    test = _desk_testset(trained_models["config"])
    constant = mae_degrees(np.full(len(test), math.pi / 4), test.labels.theta)
    dml_gain = dml.untrained_mae_deg / dml.test_mae_deg
    sml_gain = constant / sml.test_mae_deg
    ok = dml.test_mae_deg < 3.0 and dml_gain >= 10 and sml_gain >= 2
    detail = (f"dml test MAE {dml.test_mae_deg:.3f} deg (< 3), {dml_gain:.1f}x better than untrained "
              f"{dml.untrained_mae_deg:.2f} (>= 10x); sml test MAE {sml.test_mae_deg:.3f} deg, "
              f"{sml_gain:.1f}x better than constant pi/4 {constant:.2f} (>= 2x)")
    record(7, ok, detail, trained_models["elapsed"], 1800)


# ---------------------------------------------------------------- 8


def test_criterion_08_loss_floor(trained_models):
    t0 = time.perf_counter()
    params, _ = load_model(trained_models["dml"].model_path)
    test = _desk_testset(trained_models["config"])
    idx = np.sort(np.random.default_rng(8).choice(len(test), 100, replace=False))
    sub = test.subset(idx)
    X = sub.features(Mode.DML)
    cfg = params.config
    theta, _, xi = forward(params, batch_input_tensor(X, sub.Y, cfg.y_scale, cfg.x_scale))
    nn_loss = dml_head_loss(theta, xi, X, sub.Y, cfg.spacing)[0]
    geometry = ArrayGeometry(cfg.num_antennas, cfg.spacing)
    floor = np.array([
        dml_estimate(geometry, PilotSchedule(b, s), y).residual
        for b, s, y in zip(sub.beamformers, sub.symbols, sub.Y)
    ])
    violations = int(np.sum(nn_loss < floor))
    record(8, violations == 0,
           f"{violations} of 100 samples below the dml_estimate minimum; min ratio {np.min(nn_loss / floor):.4f}",
           time.perf_counter() - t0, 600)


# ---------------------------------------------------------------- 9


TINY_TRAIN = """[experiment]
num_thetas = 3
num_ranges = 2
num_beamformer_sets = 1
num_symbol_sets = 2
num_noise = 2
num_test = 4
epochs = 4
warm_start_epochs = 2
batch_size = 8
"""


def test_criterion_09_reproducibility(tmp_path, trained_models):
    t0 = time.perf_counter()
    configs = {
        "mae_vs_power": "sweep_values = 5, 25\ntrials = 20\n"
                        "methods = dml, sml, dft, music, esprit, nn_dml, nn_sml, scrlb\n"
                        f"model_dml = {trained_models['dml'].model_path}\n"
                        f"model_sml = {trained_models['sml'].model_path}\n",
        "mae_vs_slots": "sweep_values = 2, 4, 6\ntrials = 20\nmethods = dml, sml, dft, music, esprit, scrlb\n",
        "runtime": "runtime_repeats = 3\n",
        "scrlb_curve": "sweep_values = 0, 15, 30\ntrials = 20\n",
        "train": TINY_TRAIN.split("\n", 1)[1],
    }
    mismatched = []
    for kind, body in configs.items():
        path = tmp_path / f"{kind}.ini"
        path.write_text("[experiment]\n" + body)
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / kind / run
            code = cli_main([kind, "--config", str(path), "--out", str(out), "--no-timing", "--seed", "11"])
            assert code == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outputs[0] != outputs[1] or not outputs[0]:
            mismatched.append(kind)
    record(9, not mismatched,
           f"CLI re-runs byte-identical for {len(configs) - len(mismatched)}/{len(configs)} experiment kinds "
           f"(CSV with --no-timing, model file + curve for train)"
           + (f"; mismatched: {mismatched}" if mismatched else ""),
           time.perf_counter() - t0, 1200)


# ---------------------------------------------------------------- 10


def test_criterion_10_runtime_ordering(trained_models):
    t0 = time.perf_counter()
    cfg = replace(DEFAULTS["runtime"], methods=("esprit", "dft", "nn_dml", "nn_sml", "sml", "music"),
                  model_dml=str(trained_models["dml"].model_path),
                  model_sml=str(trained_models["sml"].model_path))
    r = run_runtime_table(cfg)
    t = {row.method: row.mean_runtime_s for row in r.rows}
    middle = ("nn_dml", "nn_sml", "sml")
    ok = t["esprit"] < t["dft"] and all(t["dft"] < t[m] < t["music"] for m in middle)
    detail = "median s: " + ", ".join(f"{m} {t[m]:.2e}" for m in ("esprit", "dft", *middle, "music")) + \
        " (need esprit < dft < {nn_dml, nn_sml, sml} < music)"
    record(10, ok, detail, time.perf_counter() - t0, 600)
