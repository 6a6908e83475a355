"""Shared test utilities: finite-difference gradient oracle."""
from __future__ import annotations

import numpy as np

from lumifield.tensor import Tape, Tensor


def numeric_grads(forward_value, tensors: list[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of a scalar function wrt each tensor.

    `forward_value` takes no arguments and returns a float computed from the
    tensors' current `.data`; entries are perturbed in place.
    """
    grads = []
    for t in tensors:
        grad = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = forward_value()
            flat[i] = original - h
            minus = forward_value()
            flat[i] = original
            gflat[i] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


def tape_grads(forward_tensor, tensors: list[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients of the scalar produced by `forward_tensor`."""
    for t in tensors:
        t.grad = None
    tape = Tape()
    with tape:
        loss = forward_tensor()
    tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise relative error, floored to avoid near-zero blowups."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_gradients(forward_tensor, forward_value, tensors, tol=1e-4, h=1e-5):
    """Assert reverse-mode gradients match central finite differences."""
    analytic = tape_grads(forward_tensor, tensors)
    numeric = numeric_grads(forward_value, tensors, h=h)
    worst = max(max_rel_err(a, n) for a, n in zip(analytic, numeric))
    assert worst < tol, f"gradient mismatch: max rel err {worst:.3e} >= {tol}"
    return worst
