"""Adam optimizer with bias correction."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or Inf; the step was rejected."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


class Adam:
    """Standard Adam over a named parameter dict; updates happen in place."""

    def __init__(self, params: dict[str, Tensor], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        """One update; parameters missing from `grads` are treated as zero-grad."""
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(name)
        self.step_count += 1
        t = self.step_count
        lr = self.lr if lr is None else lr
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - (lr * update).astype(p.data.dtype)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flattened optimizer state for checkpointing."""
        out: dict[str, np.ndarray] = {"step": np.array([float(self.step_count)])}
        for name in self.params:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(round(float(state["step"].reshape(-1)[0])))
        for name in self.params:
            self.m[name] = state[f"m.{name}"].reshape(self.m[name].shape).astype(self.m[name].dtype)
            self.v[name] = state[f"v.{name}"].reshape(self.v[name].shape).astype(self.v[name].dtype)


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients per parameter; parameters the loss never reached get zeros."""
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
