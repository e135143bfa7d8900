"""Unsupervised training losses and their gradients.

Both losses read only the pilot feature ``X`` and the observations ``Y``.
Gradients with respect to the three head outputs are analytic; they seed
the network tape, which carries them back to the weights.

DML:  ``|| vec(Y) - xi X^T a(theta) ||^2``
SML:  ``ln det C + tr(C^{-1} C_hat)`` with ``C = xi^2 v v^H + sigma2 I``,
      ``v = X_1^T a(theta)`` built from the first ``L`` columns of ``X``,
      and ``C_hat`` the sample covariance of ``Y``.
"""

from __future__ import annotations

import numpy as np

from .features import Mode, batch_input_tensor
from .network import NetworkParameters, forward, forward_tape

# per-sample loss assigned when the model covariance cannot be factorized
FAILED_FACTORIZATION_LOSS = 1e6


def _steering(theta, num_antennas, spacing):
    m = np.arange(num_antennas)
    phase = 2j * np.pi * spacing * m[None, :]
    a = np.exp(-phase * np.cos(theta)[:, None])
    return a, phase * np.sin(theta)[:, None] * a


def dml_head_loss(theta, xi, X, Y, spacing=0.5):
    """Per-sample DML misfit and its derivatives w.r.t. ``theta`` and ``xi``.

    ``theta``, ``xi``: ``(N,)``; ``X``: ``(N, M, QL)``; ``Y``: ``(N, L, Q)``.
    Returns ``(loss, d_theta, d_xi)``, each ``(N,)``.
    """
    n, M, _ = X.shape
    y = np.swapaxes(Y, 1, 2).reshape(n, -1)
    a, da = _steering(theta, M, spacing)
    b = np.einsum("nmk,nm->nk", X, a)
    db = np.einsum("nmk,nm->nk", X, da)
    r = y - xi[:, None] * b
    loss = np.sum(np.abs(r) ** 2, axis=1)
    d_xi = -2.0 * np.sum(r.conj() * b, axis=1).real
    d_theta = -2.0 * xi * np.sum(r.conj() * db, axis=1).real
    return loss, d_theta, d_xi


def batch_sample_covariance(Y):
    C = Y @ np.conj(np.swapaxes(Y, 1, 2)) / Y.shape[2]
    return (C + np.conj(np.swapaxes(C, 1, 2))) / 2


def _cholesky_rows(C):
    """Batched Cholesky; samples that fail come back as NaN factors."""
    try:
        return np.linalg.cholesky(C), np.ones(C.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        out = np.full(C.shape, np.nan, dtype=C.dtype)
        ok = np.zeros(C.shape[0], dtype=bool)
        for i, Ci in enumerate(C):
            try:
                out[i] = np.linalg.cholesky(Ci)
                ok[i] = True
            except np.linalg.LinAlgError:
                pass
        return out, ok


def sml_head_loss(theta, sigma2, xi, X, Y, spacing=0.5):
    """Per-sample SML negative log-likelihood and derivatives.

    Returns ``(loss, d_theta, d_sigma2, d_xi)``. Samples whose model
    covariance is not positive definite get :data:`FAILED_FACTORIZATION_LOSS`
    and zero gradients.
    """
    n, M, _ = X.shape
    L = Y.shape[1]
    B = np.swapaxes(X[:, :, :L], 1, 2)  # (N, L, M)
    a, da = _steering(theta, M, spacing)
    v = np.einsum("nlm,nm->nl", B, a)
    dv = np.einsum("nlm,nm->nl", B, da)
    xi2 = xi**2
    eye = np.eye(L)
    C = xi2[:, None, None] * v[:, :, None] * v.conj()[:, None, :] + sigma2[:, None, None] * eye
    C_hat = batch_sample_covariance(Y)

    chol, ok = _cholesky_rows(C)
    loss = np.full(n, FAILED_FACTORIZATION_LOSS)
    d_theta = np.zeros(n)
    d_sigma2 = np.zeros(n)
    d_xi = np.zeros(n)
    if not np.any(ok):
        return loss, d_theta, d_sigma2, d_xi

    Lc, Cg, Ch = chol[ok], C[ok], C_hat[ok]
    logdet = 2.0 * np.sum(np.log(np.abs(np.diagonal(Lc, axis1=1, axis2=2))), axis=1)
    Cinv = np.linalg.solve(Cg, np.broadcast_to(eye, Cg.shape))
    CinvCh = Cinv @ Ch
    trace = np.trace(CinvCh, axis1=1, axis2=2).real
    # d/dC [ln det C + tr(C^-1 C_hat)] = C^-1 - C^-1 C_hat C^-1
    G = Cinv - CinvCh @ Cinv
    vk, dvk = v[ok], dv[ok]
    Gv = np.einsum("nij,nj->ni", G, vk)
    d_xi2 = np.einsum("ni,ni->n", vk.conj(), Gv).real
    loss[ok] = logdet + trace
    d_sigma2[ok] = np.trace(G, axis1=1, axis2=2).real
    d_theta[ok] = 2.0 * xi2[ok] * np.einsum("ni,ni->n", dvk.conj(), Gv).real
    d_xi[ok] = 2.0 * xi[ok] * d_xi2
    return loss, d_theta, d_sigma2, d_xi


def _inputs(params: NetworkParameters, X, Y):
    cfg = params.config
    return batch_input_tensor(X, Y, cfg.y_scale, cfg.x_scale)


def dml_loss(params: NetworkParameters, X, Y) -> float:
    """Mean DML misfit of the network's estimates over the batch (physical units)."""
    theta, _, xi = forward(params, _inputs(params, X, Y))
    return float(np.mean(dml_head_loss(theta, xi, X, Y, params.config.spacing)[0]))


def sml_loss(params: NetworkParameters, X, Y) -> float:
    """Mean SML negative log-likelihood of the network's estimates over the batch."""
    theta, sigma2, xi = forward(params, _inputs(params, X, Y))
    return float(np.mean(sml_head_loss(theta, sigma2, xi, X, Y, params.config.spacing)[0]))


def head_loss(mode: Mode, outputs, X, Y, spacing):
    """Per-sample loss and ``(d_theta, d_sigma2, d_xi)`` for either mode."""
    theta, sigma2, xi = outputs
    if Mode(mode) is Mode.DML:
        loss, d_theta, d_xi = dml_head_loss(theta, xi, X, Y, spacing)
        return loss, (d_theta, np.zeros_like(theta), d_xi)
    loss, d_theta, d_sigma2, d_xi = sml_head_loss(theta, sigma2, xi, X, Y, spacing)
    return loss, (d_theta, d_sigma2, d_xi)


def backward(params: NetworkParameters, X, Y, mode: Mode, loss_scale: float = 1.0):
    """Mean loss (times ``loss_scale``) and its gradient for every weight.

    Returns ``(loss, grads)`` with ``grads`` keyed like ``params.weights``.
    """
    tape, leaves, outs = forward_tape(params, _inputs(params, X, Y))
    values = tuple(o.value for o in outs)
    loss, head_grads = head_loss(mode, values, X, Y, params.config.spacing)
    n = loss.shape[0]
    tape.backward([(o, g * (loss_scale / n)) for o, g in zip(outs, head_grads)])
    grads = {
        name: (var.grad if var.grad is not None else np.zeros_like(var.value))
        for name, var in leaves.items()
    }
    return float(np.mean(loss)) * loss_scale, grads
