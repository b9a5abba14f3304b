"""Central finite-difference verification of analytic gradients.

Models are expected to run in float64 here; float32 rounding would swamp
the comparison at the tolerances used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax_xent

__all__ = ["GradCheckReport", "grad_check", "Sequential"]


class Sequential:
    """Chain of layers exposing the flat named-tensor protocol."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, gy):
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"{i}.{k}"] = v
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads.items():
                out[f"{i}.{k}"] = v
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0


def _loss_fn(model, x, labels, proj):
    out = model.forward(x, train=True)
    if labels is not None:
        loss, _, grad = softmax_xent(out, labels)
        return loss, grad
    return float((out * proj).sum()), proj


def grad_check(
    model,
    x: np.ndarray,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    samples_per_tensor: int = 200,
    seed: int = 0,
    labels: np.ndarray | None = None,
) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    Without labels the scalar objective is a fixed random projection of the
    model output; with labels it is the cross-entropy head loss.
    """

    rng = np.random.default_rng(seed)
    out0 = model.forward(x, train=True)
    proj = None if labels is not None else rng.normal(size=out0.shape)
    model.zero_grads()
    _, grad_out = _loss_fn(model, x, labels, proj)
    model.backward(grad_out)
    params = model.named_params()
    grads = model.named_grads()

    report = {}
    for name, w in params.items():
        flat = w.reshape(-1)
        count = min(samples_per_tensor, flat.size)
        idx = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        analytic = grads[name].reshape(-1)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            f_plus, _ = _loss_fn(model, x, labels, proj)
            flat[i] = keep - step
            f_minus, _ = _loss_fn(model, x, labels, proj)
            flat[i] = keep
            fd = (f_plus - f_minus) / (2.0 * step)
            a = analytic[i]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return GradCheckReport(report, tolerance)
