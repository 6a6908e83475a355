"""Multilayer perceptron building blocks on top of the tensor tape."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ShapeError, affine, relu, sigmoid, softplus, tanh

ACTIVATIONS = ("relu", "sigmoid", "softplus", "tanh", "none")

_ACT_FNS = {"relu": relu, "sigmoid": sigmoid, "softplus": softplus, "tanh": tanh}


@dataclass(frozen=True)
class MlpSpec:
    """Shape and activation description of one fully connected network."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "none"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def num_layers(self) -> int:
        return len(self.hidden_dims) + 1


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str) -> dict[str, Tensor]:
    """He-uniform weights, zero biases; keys '{prefix}.w{i}' / '{prefix}.b{i}'."""
    params: dict[str, Tensor] = {}
    dims = spec.layer_dims
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{prefix}.w{i}"] = Tensor(w, requires_grad=True)
        params[f"{prefix}.b{i}"] = Tensor(np.zeros((1, fan_out)), requires_grad=True)
    return params


def mlp_forward(spec: MlpSpec, params: dict[str, Tensor], x: Tensor, prefix: str) -> Tensor:
    """Apply the network; hidden activation between layers, head activation last."""
    if x.shape[-1] != spec.input_dim:
        raise ShapeError(f"{prefix}: input dim {x.shape[-1]} != spec {spec.input_dim}")
    h = x
    last = spec.num_layers - 1
    for i in range(spec.num_layers):
        h = affine(h, params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"])
        act = spec.output_activation if i == last else spec.hidden_activation
        if act != "none":
            h = _ACT_FNS[act](h)
    return h


def mlp_param_names(spec: MlpSpec, prefix: str) -> list[str]:
    names = []
    for i in range(spec.num_layers):
        names.append(f"{prefix}.w{i}")
        names.append(f"{prefix}.b{i}")
    return names
