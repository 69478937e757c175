"""Gradient-descent optimizers over a ParamStore."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


@dataclass
class OptimConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


class Optimizer:
    """Plain SGD (``p <- p - lr * g``) or Adam-style adaptive steps.

    ``weight_decay`` adds ``2 * wd * p`` to the gradient of every parameter
    whose name is not in ``decay_exempt``.
    """

    def __init__(self, params, config: OptimConfig, decay_exempt: set[str] | None = None):
        if config.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {config.kind!r}")
        if config.lr <= 0:
            raise ConfigError("learning rate must be positive")
        self.params = params
        self.config = config
        self.decay_exempt = decay_exempt or set()
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        c = self.config
        self.t += 1
        for name, p in self.params.items():
            g = p.grad if grads is None else grads.get(name)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ContractError(f"{name}: gradient shape {g.shape} != parameter shape {p.data.shape}")
            if c.weight_decay and name not in self.decay_exempt:
                g = g + 2.0 * c.weight_decay * p.data
            if c.kind == "sgd":
                p.data = p.data - c.lr * g
                continue
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            mhat = m / (1.0 - c.beta1 ** self.t)
            vhat = v / (1.0 - c.beta2 ** self.t)
            p.data = p.data - c.lr * mhat / (np.sqrt(vhat) + c.eps)
