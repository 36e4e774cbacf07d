"""Optimizers: Adam for the inference networks, a factored-second-moment
method for the sequence scorer, plus the warmup/decay schedule."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm stays below max_norm."""
    total = 0.0
    for t in params:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for t in params:
            if t.grad is not None:
                t.grad *= scale
    return norm


class Adam:
    """Adaptive-moment method over named parameter groups.

    groups: list of (params dict, learning rate).
    """

    def __init__(self, groups, betas=(0.9, 0.999), eps=1e-8):
        self.groups = [(list(params.values()), lr) for params, lr in groups]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [[np.zeros_like(t.data) for t in params] for params, _ in self.groups]
        self.v = [[np.zeros_like(t.data) for t in params] for params, _ in self.groups]

    def parameters(self):
        for params, _ in self.groups:
            yield from params

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for (params, lr), ms, vs in zip(self.groups, self.m, self.v):
            for t, m, v in zip(params, ms, vs):
                if t.grad is None:
                    continue
                g = t.grad
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                mhat = m / bc1
                vhat = v / bc2
                t.data -= lr * lr_scale * mhat / (np.sqrt(vhat) + self.eps)


class Adafactor:
    """Factored second moments for matrices, full for vectors.

    Fixed external learning rate (no relative-step sizing), beta2
    schedule 1 - t^-0.8, RMS update clipping at 1.0.
    """

    def __init__(self, groups, eps1: float = 1e-30, eps2: float = 1e-3, clip_d: float = 1.0):
        self.groups = [(list(params.values()), lr) for params, lr in groups]
        self.eps1 = eps1
        self.eps2 = eps2
        self.clip_d = clip_d
        self.t = 0
        self.state = []
        for params, _ in self.groups:
            slots = []
            for t in params:
                if t.data.ndim >= 2:
                    rows = t.data.shape[:-1]
                    slots.append(("factored", np.zeros(rows), np.zeros(t.data.shape[:-2] + t.data.shape[-1:])))
                else:
                    slots.append(("full", np.zeros_like(t.data), None))
            self.state.append(slots)

    def parameters(self):
        for params, _ in self.groups:
            yield from params

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        beta2 = 1.0 - self.t**-0.8
        for (params, lr), slots in zip(self.groups, self.state):
            for t, slot in zip(params, slots):
                if t.grad is None:
                    continue
                g = t.grad
                g2 = g * g + self.eps1
                kind, a, b = slot
                if kind == "factored":
                    a *= beta2
                    a += (1 - beta2) * g2.mean(axis=-1)
                    b *= beta2
                    b += (1 - beta2) * g2.mean(axis=-2)
                    denom = a.mean(axis=-1, keepdims=True) if a.ndim else a.mean()
                    v = a[..., None] * b[..., None, :] / np.maximum(denom if a.ndim else denom, self.eps1)
                else:
                    a *= beta2
                    a += (1 - beta2) * g2
                    v = a
                update = g / np.sqrt(v + self.eps1)
                rms = np.sqrt(np.mean(update * update))
                if rms > self.clip_d:
                    update = update * (self.clip_d / rms)
                step_size = lr * lr_scale * max(self.eps2, _rms(t.data))
                t.data -= step_size * update


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def warmup_linear(step: int, total_steps: int, warmup_steps: int, decay: str = "linear") -> float:
    """Linear warmup to 1.0, then linear decay to 0 or a constant plateau."""
    if total_steps <= 0:
        return 1.0
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    if decay == "none" or total_steps <= warmup_steps:
        return 1.0
    frac = (total_steps - step) / max(1, total_steps - warmup_steps)
    return max(0.0, min(1.0, frac))
