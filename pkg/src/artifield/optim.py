"""Adaptive-moment optimizer with exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import TrainingError


@dataclass(frozen=True)
class ExponentialDecay:
    """lr(t) = base * gamma ** (t / decay_steps)."""

    base_lr: float
    gamma: float = 0.1
    decay_steps: int = 10000

    def at(self, step: int) -> float:
        return self.base_lr * self.gamma ** (step / self.decay_steps)


@dataclass
class Adam:
    params: dict[str, Tensor]
    schedule: ExponentialDecay
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_scale: dict[str, float] = field(default_factory=dict)
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict)
    _v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for k, p in self.params.items():
            self._m.setdefault(k, np.zeros_like(p.data))
            self._v.setdefault(k, np.zeros_like(p.data))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        lr = self.schedule.at(t)
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter {k!r} at step {t}")
            m = self._m[k]
            v = self._v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1**t)
            vhat = v / (1.0 - self.beta2**t)
            scale = self.lr_scale.get(k, 1.0)
            p.data -= lr * scale * mhat / (np.sqrt(vhat) + self.eps)

    # -- checkpoint support -------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"adam.m.{k}"] = self._m[k]
            out[f"adam.v.{k}"] = self._v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step: int):
        for k in self.params:
            self._m[k] = np.array(arrays[f"adam.m.{k}"])
            self._v[k] = np.array(arrays[f"adam.v.{k}"])
        self.step_count = step
