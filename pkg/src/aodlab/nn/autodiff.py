"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Only the operations used by the estimator network are provided. Every op
appends a closure to the tape; :meth:`Tape.backward` replays them in
reverse and accumulates ``.grad`` on every :class:`Var` involved.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


class Var:
    __slots__ = ("value", "grad", "needs_grad")

    def __init__(self, value, needs_grad=True):
        self.value = np.asarray(value)
        self.grad = None
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype, copy=True)
        else:
            self.grad += g


class Tape:
    def __init__(self):
        self._steps = []

    def __len__(self):
        return len(self._steps)

    def record(self, step):
        self._steps.append(step)

    def backward(self, seeds):
        """Propagate from ``{var: d loss / d var}`` seeds back to the leaves."""
        for var, g in seeds:
            var.accumulate(g)
        for step in reversed(self._steps):
            step()


def _im2col(x, k):
    """(N, C, H, W) zero-padded by ``k // 2`` -> patches (N, H, W, C*k*k)."""
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, H, W, k, k
    n, c, h, w = x.shape
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h, w, c * k * k)


def conv2d(tape, x: Var, w: Var, b: Var) -> Var:
    """Stride-1 'same' convolution (cross-correlation) with odd square kernels."""
    out_ch, in_ch, k, _ = w.shape
    n, _, h, wd = x.shape
    cols = _im2col(x.value, k)
    wmat = w.value.reshape(out_ch, -1)
    out = Var((cols @ wmat.T + b.value).transpose(0, 3, 1, 2))

    def step():
        g = out.grad.transpose(0, 2, 3, 1)  # N, H, W, O
        b.accumulate(g.sum(axis=(0, 1, 2)))
        w.accumulate((g.reshape(-1, out_ch).T @ cols.reshape(-1, cols.shape[-1])).reshape(w.shape))
        if not x.needs_grad:
            return
        gcols = (g @ wmat).reshape(n, h, wd, in_ch, k, k)
        p = k // 2
        gx = np.zeros((n, in_ch, h + 2 * p, wd + 2 * p), dtype=x.value.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, :, i : i + h, j : j + wd] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        x.accumulate(gx[:, :, p : p + h, p : p + wd])

    tape.record(step)
    return out


def avg_pool2x2(tape, x: Var) -> Var:
    """2x2 average pooling, ceil mode: partial edge windows average what they cover."""
    n, c, h, w = x.shape
    ho, wo = -(-h // 2), -(-w // 2)
    xp = np.zeros((n, c, 2 * ho, 2 * wo), dtype=x.value.dtype)
    xp[:, :, :h, :w] = x.value
    count = np.zeros((2 * ho, 2 * wo))
    count[:h, :w] = 1.0
    count = count.reshape(ho, 2, wo, 2).sum(axis=(1, 3))
    out = Var(xp.reshape(n, c, ho, 2, wo, 2).sum(axis=(3, 5)) / count)

    def step():
        g = out.grad / count
        up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        x.accumulate(up[:, :, :h, :w])

    tape.record(step)
    return out


def flatten(tape, x: Var) -> Var:
    shape = x.shape
    out = Var(x.value.reshape(shape[0], -1))

    def step():
        x.accumulate(out.grad.reshape(shape))

    tape.record(step)
    return out


def linear(tape, x: Var, w: Var, b: Var) -> Var:
    """``x @ w.T + b`` with ``w`` shaped (out, in)."""
    out = Var(x.value @ w.value.T + b.value)

    def step():
        g = out.grad
        w.accumulate(g.T @ x.value)
        b.accumulate(g.sum(axis=0))
        x.accumulate(g @ w.value)

    tape.record(step)
    return out


def softplus(tape, x: Var) -> Var:
    out = Var(np.logaddexp(0.0, x.value))

    def step():
        x.accumulate(out.grad * expit(x.value))

    tape.record(step)
    return out


def logistic(tape, x: Var) -> Var:
    s = expit(x.value)
    out = Var(s)

    def step():
        x.accumulate(out.grad * s * (1.0 - s))

    tape.record(step)
    return out


def scale(tape, x: Var, factor: float) -> Var:
    out = Var(x.value * factor)

    def step():
        x.accumulate(out.grad * factor)

    tape.record(step)
    return out


def column(tape, x: Var, index: int) -> Var:
    """Select ``x[:, index]``."""
    out = Var(x.value[:, index])

    def step():
        g = np.zeros_like(x.value)
        g[:, index] = out.grad
        x.accumulate(g)

    tape.record(step)
    return out
