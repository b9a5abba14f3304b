"""SGD with momentum on flat named-parameter dicts.

Update rule: w_{t+1} = w_t - lr * grad + momentum * (w_t - w_{t-1}),
where the last term is the stored previous update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerState", "sgd_momentum_step"]


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    previous_update: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def sgd_momentum_step(params: dict, grads: dict, state: OptimizerState) -> dict:
    """Apply one update in place; stores each tensor's update for the next step."""

    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        prev = state.previous_update.get(name)
        step = -state.learning_rate * g
        if prev is not None:
            step = step + state.momentum * prev
        w += step.astype(w.dtype)
        state.previous_update[name] = step
    return params
