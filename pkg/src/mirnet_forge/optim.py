"""Charbonnier objective, Adam optimizer, and cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ContractError, ShapeError, Tensor


@dataclass
class CharbonnierConfig:
    """epsilon is the smoothing constant; mode picks between the per-element
    mean of sqrt(d^2 + eps^2) and the literal global norm sqrt(sum d^2 + eps^2)."""
    epsilon: float = 1e-3
    mode: str = "per_pixel_mean"

    def validate(self):
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")
        if self.mode not in ("per_pixel_mean", "global_norm"):
            raise ContractError(f"unknown loss mode {self.mode!r}")


def charbonnier_loss(pred: Tensor, target: Tensor,
                     cfg: CharbonnierConfig | None = None) -> Tensor:
    """Smooth L1-like penalty, differentiable at zero difference."""
    cfg = cfg or CharbonnierConfig()
    cfg.validate()
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"shape mismatch: {pred.data.shape} vs {target.data.shape}")
    d = pred.data - target.data
    eps2 = cfg.epsilon * cfg.epsilon
    if cfg.mode == "per_pixel_mean":
        root = np.sqrt(d * d + eps2)
        out = np.asarray(root.mean(), dtype=d.dtype)

        def back(g):
            gp = g * d / (root * d.size)
            return gp.astype(d.dtype), (-gp).astype(d.dtype)
    else:
        total = np.sqrt((d * d).sum() + eps2)
        out = np.asarray(total, dtype=d.dtype)

        def back(g):
            gp = g * d / total
            return gp.astype(d.dtype), (-gp).astype(d.dtype)

    return T._record([pred, target], out, back)


@dataclass
class CosineSchedule:
    lr_init: float = 2e-4
    lr_min: float = 1e-6
    total_steps: int = 700_000

    def validate(self):
        if not (self.lr_init > self.lr_min > 0):
            raise ContractError("require lr_init > lr_min > 0")
        if self.total_steps < 1:
            raise ContractError("total_steps must be >= 1")


def cosine_lr(step: int, sched: CosineSchedule) -> float:
    """Half-cosine decay from lr_init at step 0 to lr_min at total_steps.

    Steps past the end clamp to lr_min.
    """
    sched.validate()
    if step < 0:
        raise ContractError("step must be non-negative")
    if step >= sched.total_steps:
        return sched.lr_min
    frac = step / sched.total_steps
    return sched.lr_min + 0.5 * (sched.lr_init - sched.lr_min) * (1.0 + math.cos(math.pi * frac))


class Adam:
    """Adam with bias correction; state is keyed by parameter name so it can
    persist alongside checkpoints."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], lr: float):
        if lr <= 0:
            raise ContractError("lr must be positive")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ContractError(
                    f"gradient shape {g.shape} misaligned with parameter "
                    f"{name} of shape {p.data.shape}")
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name] = m
            self.v[name] = v
            mhat = m / c1
            vhat = v / c2
            p.data = p.data - (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)
