from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CosineSchedule:
    lr0: float
    t_max: int = 25
    eta_min: float | None = None

    def __post_init__(self):
        if self.eta_min is None:
            object.__setattr__(self, "eta_min", 0.01 * self.lr0)

    def lr(self, epoch: float) -> float:
        t = min(max(epoch, 0), self.t_max)
        return self.eta_min + (self.lr0 - self.eta_min) * (1 + math.cos(math.pi * t / self.t_max)) / 2


def cosine_lr(schedule: CosineSchedule, epoch: float) -> float:
    return schedule.lr(epoch)


@dataclass
class AdamW:
    """AdamW with decoupled weight decay over a name -> array dict."""

    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        """Update ``params`` (arrays, modified in place) from ``grads``."""
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        c1 = 1 - b1 ** self.step_count
        c2 = 1 - b2 ** self.step_count
        for name in sorted(params):
            p = params[name]
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p *= 1 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adamw_step(state: AdamW, params: dict, grads: dict, lr: float | None = None) -> None:
    state.step(params, grads, lr)
