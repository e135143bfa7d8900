import math

import numpy as np
import pytest

from aodlab.ml import dml_estimate, dml_residual, sml_nll
from aodlab.nn.features import (
    Mode,
    batch_input_tensor,
    build_input_tensor,
    build_pilot_feature,
    pilot_feature_matrix,
    unpack_input_tensor,
)
from aodlab.nn.losses import (
    FAILED_FACTORIZATION_LOSS,
    backward,
    dml_head_loss,
    dml_loss,
    sml_head_loss,
    sml_loss,
)
from aodlab.nn.network import PARAM_ORDER, NetworkConfig, forward, init_params, zero_head
from aodlab.nn.optim import clip_by_global_norm, optimizer_step
from aodlab.signal_model import ArrayGeometry, PilotSchedule, complex_normal, random_schedule, vec


def tiny_problem(seed=1, n=3):
    rng = np.random.default_rng(seed)
    M, L, Q = 2, 2, 2
    cfg = NetworkConfig(M, L, Q, scale_sigma=0.5, scale_xi=1.0, hidden=4)
    params = init_params(cfg, rng)
    B = complex_normal(rng, (n, L, M), 2.0)
    c = complex_normal(rng, (n, Q), 2.0)
    Y = complex_normal(rng, (n, L, Q), 2.0)
    return params, B, c, Y


def finite_difference_errors(params, X, Y, mode, eps=1e-4):
    _, grads = backward(params, X, Y, mode)
    errors = {}
    for name in PARAM_ORDER:
        w = params.weights[name]
        fd = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + eps
            up, _ = backward(params, X, Y, mode)
            w[idx] = old - eps
            down, _ = backward(params, X, Y, mode)
            w[idx] = old
            fd[idx] = (up - down) / (2 * eps)
        errors[name] = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-300)
    return errors


@pytest.mark.parametrize("mode", ["dml", "sml"])
def test_gradient_gate_tiny_network(mode):
    params, B, c, Y = tiny_problem()
    X = pilot_feature_matrix(B, c, mode)
    errors = finite_difference_errors(params, X, Y, mode)
    assert max(errors.values()) < 1e-4, errors


def test_pilot_feature_columns():
    sched = random_schedule(np.random.default_rng(2), 1.0, 4, 3, 2)
    X = build_pilot_feature(sched, Mode.DML).X
    assert X.shape == (4, 6)
    for q in range(2):
        for l in range(3):
            np.testing.assert_allclose(X[:, q * 3 + l], sched.symbols[q] * sched.beamformers[l])
    Xs = build_pilot_feature(sched, Mode.SML).X
    for q in range(2):
        np.testing.assert_allclose(Xs[:, q * 3 : q * 3 + 3], sched.beamformers.T)


def test_dml_feature_reproduces_stacked_response():
    geometry = ArrayGeometry(4)
    sched = random_schedule(np.random.default_rng(3), 1.0, 4, 3, 2)
    X = build_pilot_feature(sched, "dml").X
    from aodlab.signal_model import steering_vector

    a = steering_vector(geometry, 0.8)
    np.testing.assert_allclose(X.T @ a, sched.stacked_response(a))


def test_input_tensor_round_trip():
    rng = np.random.default_rng(4)
    sched = random_schedule(rng, 1.0, 8, 6, 4)
    Y = complex_normal(rng, (6, 4))
    feat = build_pilot_feature(sched, Mode.DML)
    S = build_input_tensor(feat, Y)
    assert S.shape == (2, 9, 24)
    np.testing.assert_allclose(S[0, 0] + 1j * S[1, 0], vec(Y))
    X, Y2 = unpack_input_tensor(S, 6)
    np.testing.assert_allclose(X, feat.X)
    np.testing.assert_allclose(Y2, Y)
    B = batch_input_tensor(feat.X[None], Y[None])
    np.testing.assert_allclose(B[0], S)


def test_input_tensor_rejects_mismatch():
    with pytest.raises(ValueError):
        build_input_tensor(np.ones((8, 24)), np.ones((6, 3)))


def test_network_output_ranges():
    rng = np.random.default_rng(5)
    cfg = NetworkConfig(8, 6, 4, scale_sigma=1e-15, scale_xi=1e-5)
    params = init_params(cfg, rng)
    S = rng.standard_normal((7,) + cfg.input_shape) * 50
    theta, sigma2, xi = forward(params, S)
    assert theta.shape == (7,)
    assert np.all((theta > 0) & (theta < math.pi / 2))
    assert np.all(sigma2 > 0) and np.all(xi > 0)


def test_zero_head_gives_midpoint():
    cfg = NetworkConfig(8, 6, 4, scale_sigma=2.0, scale_xi=3.0)
    params = zero_head(init_params(cfg, np.random.default_rng(6)))
    theta, sigma2, xi = forward(params, np.zeros((2,) + cfg.input_shape))
    np.testing.assert_allclose(theta, math.pi / 4)
    np.testing.assert_allclose(sigma2, 2.0 * math.log(2))
    np.testing.assert_allclose(xi, 3.0 * math.log(2))


def test_forward_rejects_wrong_shape():
    cfg = NetworkConfig(8, 6, 4, scale_sigma=1.0, scale_xi=1.0)
    with pytest.raises(ValueError):
        forward(init_params(cfg, np.random.default_rng(0)), np.zeros((1, 2, 8, 24)))


def test_dml_head_loss_matches_residual():
    rng = np.random.default_rng(7)
    geometry = ArrayGeometry(8)
    scheds = [random_schedule(rng, 1.0, 8, 6, 4) for _ in range(3)]
    X = np.stack([build_pilot_feature(s, "dml").X for s in scheds])
    Y = complex_normal(rng, (3, 6, 4))
    theta = np.array([0.2, 0.7, 1.3])
    xi = np.array([0.1, 0.5, 2.0])
    loss, _, _ = dml_head_loss(theta, xi, X, Y)
    expected = [dml_residual(t, x, geometry, s, y) for t, x, s, y in zip(theta, xi, scheds, Y)]
    np.testing.assert_allclose(loss, expected, rtol=1e-12)


def test_sml_head_loss_matches_cholesky_nll():
    rng = np.random.default_rng(8)
    geometry = ArrayGeometry(8)
    scheds = [random_schedule(rng, 1.0, 8, 6, 4) for _ in range(3)]
    X = np.stack([build_pilot_feature(s, "sml").X for s in scheds])
    Y = complex_normal(rng, (3, 6, 4))
    theta, sigma2, xi = np.array([0.2, 0.7, 1.3]), np.array([0.5, 1.0, 2.0]), np.array([0.1, 0.5, 2.0])
    loss = sml_head_loss(theta, sigma2, xi, X, Y)[0]
    expected = []
    for t, s2, x, s, y in zip(theta, sigma2, xi, scheds, Y):
        C_hat = (y @ y.conj().T) / 4
        expected.append(sml_nll(t, x**2, s2, geometry, s.beamformers, (C_hat + C_hat.conj().T) / 2))
    np.testing.assert_allclose(loss, expected, rtol=1e-10)


def test_sml_head_loss_failed_factorization():
    rng = np.random.default_rng(9)
    X = pilot_feature_matrix(complex_normal(rng, (2, 2, 2)), np.ones((2, 2)), "sml")
    Y = complex_normal(rng, (2, 2, 2))
    loss, dt, ds, dx = sml_head_loss(np.array([0.3, 0.3]), np.array([1.0, -5.0]), np.array([0.0, 0.0]), X, Y)
    assert loss[1] == FAILED_FACTORIZATION_LOSS
    assert dt[1] == ds[1] == dx[1] == 0
    assert np.isfinite(loss[0]) and loss[0] != FAILED_FACTORIZATION_LOSS


def test_network_dml_loss_not_below_estimator_minimum():
    rng = np.random.default_rng(10)
    geometry = ArrayGeometry(8)
    cfg = NetworkConfig(8, 6, 4, scale_sigma=1.0, scale_xi=1.0)
    params = init_params(cfg, rng)
    for _ in range(5):
        sched = random_schedule(rng, 1.0, 8, 6, 4)
        Y = complex_normal(rng, (6, 4))
        X = build_pilot_feature(sched, "dml").X[None]
        assert dml_loss(params, X, Y[None]) >= dml_estimate(geometry, sched, Y).residual * (1 - 1e-12)


def test_loss_scale_scales_gradients():
    params, B, c, Y = tiny_problem()
    X = pilot_feature_matrix(B, c, "dml")
    l1, g1 = backward(params, X, Y, "dml")
    l2, g2 = backward(params, X, Y, "dml", loss_scale=3.0)
    assert l2 == pytest.approx(3 * l1)
    for k in g1:
        np.testing.assert_allclose(g2[k], 3 * g1[k])
    assert l1 == pytest.approx(dml_loss(params, X, Y))
    Xs = pilot_feature_matrix(B, c, "sml")
    assert backward(params, Xs, Y, "sml")[0] == pytest.approx(sml_loss(params, Xs, Y))


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped = clip_by_global_norm(grads, 1.0)
    np.testing.assert_allclose([clipped["a"][0], clipped["b"][0]], [0.6, 0.8])
    assert clip_by_global_norm(grads, 10.0) is grads
    assert clip_by_global_norm(grads, None) is grads


def test_adamw_first_step_against_reference():
    cfg = NetworkConfig(2, 2, 2, scale_sigma=1.0, scale_xi=1.0, hidden=4)
    params = init_params(cfg, np.random.default_rng(11))
    rng = np.random.default_rng(12)
    grads = {k: rng.standard_normal(v.shape) for k, v in params.weights.items()}
    lr, wd = 1e-2, 0.1
    new = optimizer_step(params, grads, lr, wd)
    for k, w in params.weights.items():
        g = grads[k]
        m_hat = (0.1 * g) / 0.1
        v_hat = (0.001 * g * g) / 0.001
        expected = w * (1 - lr * wd) - lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(new.weights[k], expected, rtol=1e-12, atol=1e-15)
    assert new.step == 1 and params.step == 0
    # the input parameters are untouched
    assert not np.allclose(new.weights["fc1.w"], params.weights["fc1.w"])


def test_adamw_decay_is_decoupled():
    cfg = NetworkConfig(2, 2, 2, scale_sigma=1.0, scale_xi=1.0, hidden=4)
    params = init_params(cfg, np.random.default_rng(13))
    zeros = {k: np.zeros_like(v) for k, v in params.weights.items()}
    new = optimizer_step(params, zeros, 0.1, 0.5)
    for k in params.weights:
        np.testing.assert_allclose(new.weights[k], params.weights[k] * 0.95)
    assert np.all(new.moment2["fc1.w"] == 0)


def test_adamw_minimizes_quadratic():
    cfg = NetworkConfig(2, 2, 2, scale_sigma=1.0, scale_xi=1.0, hidden=4)
    params = init_params(cfg, np.random.default_rng(14))
    for _ in range(2000):
        params = optimizer_step(params, {k: 2 * (v - 1.0) for k, v in params.weights.items()}, 1e-2)
    for v in params.weights.values():
        np.testing.assert_allclose(v, 1.0, atol=1e-2)


def test_optimizer_rejects_shape_mismatch():
    cfg = NetworkConfig(2, 2, 2, scale_sigma=1.0, scale_xi=1.0, hidden=4)
    params = init_params(cfg, np.random.default_rng(15))
    grads = {k: np.zeros(1) for k in params.weights}
    with pytest.raises(ValueError):
        optimizer_step(params, grads, 1e-3)
