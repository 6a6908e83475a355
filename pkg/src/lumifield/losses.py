"""The unsupervised training objective.

Three families of supervision:

* data: a relative squared error between the rendered (unenhanced) color and
  the observed pixel, weighted by the inverse of the rendered brightness so
  errors in dark regions count more; this is the linearization of a
  log-domain tone-mapped loss,
* color: pulls enhanced pixels toward a target gray level, shrinks the
  per-pixel channel variance (relaxed for saturated basis colors) and
  regularizes the exponent tweak,
* smoothness: edge-aware quadratic penalties tying the integrated
  enhancement coefficients of neighboring rays together, normalized by the
  local contrast of the integrated lighting.

Denominators act as constants (no gradient) so the networks cannot trade
penalty for denominator growth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, narrow, sqrt, stop_gradient


@dataclass
class LossConfig:
    brightness_target: float = 0.55   # target mean level for enhanced pixels
    lambda1: float = 0.1              # channel-variance weight inside color loss
    lambda2: float = 0.01             # gamma regularization weight
    beta1: float = 0.1                # variance-ratio stabilizer
    # Smoothness denominator offset. Caps the edge-aware weight at 1/eps1 in
    # flat regions; much below 1e-2 that cap is so high the cheapest descent
    # direction is shrinking the coefficient maps and the geometry itself
    # toward zero amplitude, which fogs the density field.
    eps1: float = 1e-2
    eps2: float = 1e-3                # tone-map offset in the data loss
    weight_color: float = 0.1         # color loss weight in the total
    weight_smooth: float = 0.05       # smoothness loss weight in the total
    enable_data: bool = True
    enable_brightness: bool = True    # color term 1
    enable_grayworld: bool = True     # color term 2
    enable_gamma_reg: bool = True     # color term 3
    enable_smooth: bool = True

    def __post_init__(self):
        if not (0.0 < self.brightness_target < 1.0):
            raise ValueError("brightness_target must lie in (0, 1)")
        for name in ("beta1", "eps1", "eps2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def ablated(self, **flags) -> "LossConfig":
        cfg = LossConfig(**{**self.__dict__})
        for key, value in flags.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown loss flag {key!r}")
            setattr(cfg, key, value)
        return cfg


@dataclass
class RayBatch:
    """One optimization step's rays, rendered.

    `outputs` holds the composited tensors for all rays stacked as
    [centers | horizontal neighbors | vertical neighbors], `size` rays per
    block.  Neighbors at the image border reuse the center ray, which makes
    their smoothness contribution vanish.
    """

    outputs: dict[str, Tensor]
    observed: np.ndarray      # (3 * size, 3) pixels in [0, 1]
    size: int

    def block(self, key: str, index: int) -> Tensor:
        return narrow(self.outputs[key], 0, index * self.size, self.size)


def _channel_variance(x: Tensor) -> Tensor:
    """Population variance across the 3 channels, per row: (m, 3) -> (m, 1)."""
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    return (centered * centered).mean(axis=1, keepdims=True)


def loss_color(c_hat: Tensor, r_pixel: Tensor, gamma_r: Tensor, cfg: LossConfig) -> Tensor:
    """Gray-world colorimetric loss over a batch of composited rays."""
    if c_hat.shape[0] == 0:
        raise ValueError("empty batch")
    zero = Tensor(np.zeros(()), dtype=c_hat.dtype)
    total = zero
    if cfg.enable_brightness:
        diff = c_hat - cfg.brightness_target
        total = total + (diff * diff).mean()
    if cfg.enable_grayworld:
        var_hat = _channel_variance(c_hat)
        var_basis = stop_gradient(_channel_variance(r_pixel))
        total = total + cfg.lambda1 * (var_hat / (var_basis + cfg.beta1)).mean()
    if cfg.enable_gamma_reg:
        norms = sqrt((gamma_r * gamma_r).sum(axis=1) + 1e-12)
        total = total + cfg.lambda2 * norms.mean()
    return total


def _pair_penalty(center: Tensor, neighbor: Tensor,
                  v_center: Tensor, v_neighbor: Tensor, eps1: float) -> Tensor:
    """Edge-aware squared difference, channel-summed, one value per ray."""
    diff = center - neighbor
    v_diff = stop_gradient(v_center - v_neighbor)
    denom = v_diff * v_diff + eps1
    return ((diff * diff) / denom).sum(axis=1)


def loss_smooth(batch: RayBatch, cfg: LossConfig) -> Tensor:
    """Smoothness of the integrated coefficients against lighting contrast."""
    if "alpha" not in batch.outputs:
        raise ValueError("batch was rendered without enhancement outputs")
    v_c = batch.block("v", 0)
    v_h = batch.block("v", 1)
    v_v = batch.block("v", 2)
    total = Tensor(np.zeros(()), dtype=v_c.dtype)
    for key in ("alpha", "gamma"):
        q_c = batch.block(key, 0)
        q_h = batch.block(key, 1)
        q_v = batch.block(key, 2)
        penalty = _pair_penalty(q_c, q_h, v_c, v_h, cfg.eps1) \
            + _pair_penalty(q_c, q_v, v_c, v_v, cfg.eps1)
        total = total + 0.5 * penalty.mean()
    return total


def loss_data(c: Tensor, observed: np.ndarray, cfg: LossConfig) -> Tensor:
    """Dark-weighted data term on the unenhanced color."""
    obs = np.asarray(observed, dtype=c.dtype)
    residual = c - Tensor(obs, dtype=c.dtype)
    scale = stop_gradient(c) + cfg.eps2
    ratio = residual / scale
    return (ratio * ratio).mean()


def loss_total(batch: RayBatch, cfg: LossConfig):
    """Weighted sum of the enabled terms plus a per-term breakdown."""
    dtype = batch.outputs["c"].dtype
    zero = Tensor(np.zeros(()), dtype=dtype)
    parts: dict[str, float] = {}

    data_term = loss_data(batch.outputs["c"], batch.observed, cfg) \
        if cfg.enable_data else zero
    parts["data"] = float(data_term.data)

    color_enabled = cfg.enable_brightness or cfg.enable_grayworld or cfg.enable_gamma_reg
    if color_enabled and "c_hat" in batch.outputs:
        color_term = loss_color(batch.outputs["c_hat"], batch.outputs["r"],
                                batch.outputs["gamma"], cfg)
    else:
        color_term = zero
    parts["color"] = float(color_term.data)

    if cfg.enable_smooth and "alpha" in batch.outputs:
        smooth_term = loss_smooth(batch, cfg)
    else:
        smooth_term = zero
    parts["smooth"] = float(smooth_term.data)

    total = data_term + cfg.weight_color * color_term + cfg.weight_smooth * smooth_term
    parts["total"] = float(total.data)
    return total, parts
