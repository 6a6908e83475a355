"""The decomposed radiance field.

A trunk network maps encoded position to a feature vector and a density.
Three heads hang off the feature:

* a direction-conditioned head producing the scalar lighting component ``v``,
* a direction-free head producing the 3-channel color basis ``r``,
* a direction-free head producing the enhancement coefficients ``alpha``
  (scalar lighting gain) and ``gamma`` (per-channel exponent tweak).

Point color is the product ``c = v * r``; the enhanced color multiplies the
basis by a per-channel power-law remap of ``v`` instead.  Direction feeds the
``v`` head only, which forces ``r`` and density to be view-independent by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MlpSpec, init_mlp, mlp_forward
from .rng import rng_for
from .tensor import (Tensor, clamp_min, clip, concat, exp, log, narrow,
                     sigmoid, softplus, tanh)


@dataclass(frozen=True)
class EncodingConfig:
    """Sinusoidal frequency encoding: [x, sin(2^l pi x), cos(2^l pi x), ...]."""

    num_frequencies: int = 10
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 1:
            raise ValueError("num_frequencies must be >= 1")

    def encoded_dim(self, in_dim: int) -> int:
        return in_dim * (2 * self.num_frequencies + int(self.include_input))


def positional_encode(x: Tensor, cfg: EncodingConfig) -> Tensor:
    """Lift coordinates into sinusoids of geometrically increasing frequency."""
    if isinstance(x, np.ndarray):
        x = Tensor(x, dtype=x.dtype)
    parts = [x] if cfg.include_input else []
    for level in range(cfg.num_frequencies):
        scaled = x * (np.pi * (2.0 ** level))
        parts.append(scaled.sin())
        parts.append(scaled.cos())
    return concat(parts, axis=1)


@dataclass(frozen=True)
class FieldConfig:
    pos_encoding: EncodingConfig = EncodingConfig(num_frequencies=10)
    dir_encoding: EncodingConfig = EncodingConfig(num_frequencies=4)
    feature_dim: int = 64
    density_hidden: tuple[int, ...] = (128, 128, 128, 128)
    head_hidden: tuple[int, ...] = (64, 64)
    gamma0: float = 2.2
    alpha_floor: float = 0.05
    gamma_cap: float = 1.0
    scene_bound: float = 1.6

    def density_spec(self) -> MlpSpec:
        return MlpSpec(self.pos_encoding.encoded_dim(3), self.density_hidden,
                       self.feature_dim + 1)

    def lighting_spec(self) -> MlpSpec:
        return MlpSpec(self.feature_dim + self.dir_encoding.encoded_dim(3),
                       self.head_hidden, 1)

    def basis_spec(self) -> MlpSpec:
        return MlpSpec(self.feature_dim, self.head_hidden, 3)

    def enhancement_spec(self) -> MlpSpec:
        return MlpSpec(self.feature_dim, self.head_hidden, 4)


@dataclass
class FieldNetworks:
    """Parameter bundle for the trunk and the three heads.

    ``fixed_alpha`` / ``fixed_gamma`` override the enhancement head with
    constants; together with ``gamma0`` they let tests force the enhancement
    into an exact identity.
    """

    config: FieldConfig
    params: dict[str, Tensor]
    fixed_alpha: float | None = None
    fixed_gamma: float | None = None

    @classmethod
    def create(cls, seed: int, config: FieldConfig | None = None) -> "FieldNetworks":
        config = config or FieldConfig()
        params: dict[str, Tensor] = {}
        params.update(init_mlp(config.density_spec(), rng_for(seed, "init/density"), "density"))
        params.update(init_mlp(config.lighting_spec(), rng_for(seed, "init/lighting"), "lighting"))
        params.update(init_mlp(config.basis_spec(), rng_for(seed, "init/basis"), "basis"))
        params.update(init_mlp(config.enhancement_spec(), rng_for(seed, "init/enh"), "enh"))
        return cls(config=config, params=params)

    def zero_weights(self) -> None:
        """Zero every parameter in place (test hook for closed-form outputs)."""
        for p in self.params.values():
            p.data = np.zeros_like(p.data)


def query_density(nets: FieldNetworks, positions: Tensor,
                  return_clamped: bool = False):
    """Trunk evaluation: positions (m, 3) -> feature (m, F), density (m, 1).

    Positions are normalized by the scene bound before encoding; anything
    outside [-bound, bound] is clamped, and the clamp mask is returned when
    asked for.
    """
    if isinstance(positions, np.ndarray):
        positions = Tensor(positions, dtype=positions.dtype)
    bound = nets.config.scene_bound
    clamped_mask = None
    if return_clamped:
        clamped_mask = np.any(np.abs(positions.data) > bound, axis=1)
    normalized = clip(positions * (1.0 / bound), -1.0, 1.0)
    encoded = positional_encode(normalized, nets.config.pos_encoding)
    raw = mlp_forward(nets.config.density_spec(), nets.params, encoded, "density")
    feat = narrow(raw, 1, 0, nets.config.feature_dim)
    sigma = softplus(narrow(raw, 1, nets.config.feature_dim, 1))
    if return_clamped:
        return feat, sigma, clamped_mask
    return feat, sigma


def query_decomposition(nets: FieldNetworks, feat: Tensor, directions: Tensor):
    """Heads for the color split: feature + view direction -> (v, r).

    ``v`` is a scalar in (0, 1) per sample and the only direction-dependent
    quantity; ``r`` is a 3-vector in (0, 1)^3 computed from the feature alone.
    """
    if isinstance(directions, np.ndarray):
        directions = Tensor(directions, dtype=directions.dtype)
    dir_enc = positional_encode(directions, nets.config.dir_encoding)
    v_in = concat([feat, dir_enc], axis=1)
    v = sigmoid(mlp_forward(nets.config.lighting_spec(), nets.params, v_in, "lighting"))
    r = sigmoid(mlp_forward(nets.config.basis_spec(), nets.params, feat, "basis"))
    return v, r


def query_enh_coeffs(nets: FieldNetworks, feat: Tensor):
    """Enhancement head: feature -> (alpha (m,1), gamma (m,3)).

    alpha = floor + softplus(raw) > floor; gamma = cap * tanh(raw) stays in
    (-cap, cap), keeping the exponent gamma0 + gamma positive.
    """
    cfg = nets.config
    if nets.fixed_alpha is not None or nets.fixed_gamma is not None:
        m = feat.shape[0]
        alpha_val = cfg.alpha_floor if nets.fixed_alpha is None else nets.fixed_alpha
        gamma_val = 0.0 if nets.fixed_gamma is None else nets.fixed_gamma
        alpha = Tensor(np.full((m, 1), alpha_val), dtype=feat.dtype)
        gamma = Tensor(np.full((m, 3), gamma_val), dtype=feat.dtype)
        return alpha, gamma
    raw = mlp_forward(cfg.enhancement_spec(), nets.params, feat, "enh")
    alpha = softplus(narrow(raw, 1, 0, 1)) + cfg.alpha_floor
    gamma = tanh(narrow(raw, 1, 1, 3)) * cfg.gamma_cap
    return alpha, gamma


def enhance(v: Tensor, alpha: Tensor, gamma: Tensor, gamma0: float) -> Tensor:
    """Dynamic gamma remap of the lighting scalar: (v / alpha) ** (1 / (gamma0 + gamma)).

    v (m,1) broadcasts over the three channels of gamma (m,3); the result is
    the 3-channel enhanced lighting. v is clamped away from zero so the
    logarithm stays defined.
    """
    safe_v = clamp_min(v, 1e-6)
    log_ratio = log(safe_v) - log(alpha)
    exponent = 1.0 / (gamma + gamma0)
    return exp(log_ratio * exponent)


def point_colors(v: Tensor, r: Tensor) -> Tensor:
    """Original per-sample color: the scalar lighting times the basis."""
    return v * r


@dataclass(frozen=True)
class PointSample:
    """Every field quantity at a single queried point (plain numpy)."""

    position: np.ndarray
    direction: np.ndarray
    sigma: float
    feature: np.ndarray
    v: float
    r: np.ndarray
    alpha: float
    gamma: np.ndarray
    color: np.ndarray            # v * r, exact by construction
    enhanced_color: np.ndarray   # enhance(v, alpha, gamma) * r


def query_point(nets: FieldNetworks, position, direction) -> PointSample:
    """Evaluate the whole decomposition at one point (inspection helper)."""
    position = np.asarray(position, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"direction must be unit length, |d| = {norm}")
    dtype = nets.params[next(iter(nets.params))].dtype
    feat, sigma = query_density(nets, Tensor(position.astype(dtype)))
    v, r = query_decomposition(nets, feat, Tensor(direction.astype(dtype)))
    alpha, gamma = query_enh_coeffs(nets, feat)
    c = point_colors(v, r)
    v_hat = enhance(v, alpha, gamma, nets.config.gamma0)
    return PointSample(
        position=position[0], direction=direction[0],
        sigma=float(sigma.data[0, 0]), feature=feat.data[0].copy(),
        v=float(v.data[0, 0]), r=r.data[0].copy(),
        alpha=float(alpha.data[0, 0]), gamma=gamma.data[0].copy(),
        color=c.data[0].copy(), enhanced_color=(v_hat * r).data[0].copy())
