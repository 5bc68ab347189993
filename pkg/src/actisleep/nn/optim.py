from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .functional import ShapeError


@dataclass
class OptimizerState:
    learning_rate: float = 0.01
    momentum: float = 0.9
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def sgd_momentum_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                      state: OptimizerState):
    """Classical (heavy-ball) momentum, in place.

        v <- momentum * v - lr * g
        p <- p + v

    Velocity buffers are created as zeros on first use.
    """
    if params.keys() != grads.keys():
        raise ShapeError("parameter and gradient keys differ")
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, parameter has {p.shape}")
        v = state.velocity.get(key)
        if v is None:
            v = np.zeros_like(p)
        elif v.shape != p.shape:
            raise ShapeError(f"velocity for {key} has shape {v.shape}, parameter has {p.shape}")
        v = state.momentum * v - state.learning_rate * g
        state.velocity[key] = v
        p += v
    return params, state
