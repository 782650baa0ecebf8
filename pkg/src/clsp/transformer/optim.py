from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in tensor {name!r}")
        self.tensor = name


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    batch_size: int = 64
    steps: int = 2000
    warmup: int = 100
    label_smoothing: float = 0.0
    clip_norm: Optional[float] = 1.0
    data_seed: int = 0
    shuffle: bool = True
    eval_every: int = 200

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0 or self.warmup < 0:
            raise ValueError("learning rate, batch size and step counts must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam hyperparameters")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def learning_rate(config: TrainConfig, step: int) -> float:
    if config.warmup and step < config.warmup:
        return config.lr * step / config.warmup
    return config.lr


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update, applied in place.

    Every gradient is checked before anything is modified, so a
    :class:`NonFiniteGradient` leaves ``params`` and ``state`` untouched.
    Returns ``(params, state)``.
    """
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(name)
    state.step += 1
    t = state.step
    lr = learning_rate(config, t)
    c1 = 1.0 - config.beta1**t
    c2 = 1.0 - config.beta2**t
    for name, w in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + config.eps)).astype(w.dtype)
    return params, state


def clip_by_global_norm(grads: dict, max_norm: Optional[float]) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * np.asarray(scale, dtype=grads[k].dtype)
    return norm
