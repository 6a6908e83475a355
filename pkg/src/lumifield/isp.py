"""Low-light camera pipeline simulation.

Linear radiance is scaled down by an exposure factor, tinted by per-channel
gains (white balance error), corrupted by heteroscedastic Gaussian sensor
noise (variance a*signal + b, a shot-noise stand-in plus a read-noise floor),
clamped, passed through the standard sRGB transfer curve and quantized to
8 bits.  The noise is zero-mean in the linear domain; clamping and the
nonlinear encode are what bias the result.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DegradationParams:
    exposure: float = 0.04
    gains: tuple[float, float, float] = (0.85, 1.0, 1.15)
    shot_noise: float = 0.01
    read_noise: float = 5e-5
    srgb: bool = True
    bits: int = 8

    def __post_init__(self):
        if not (0.0 < self.exposure <= 1.0):
            raise ValueError("exposure must lie in (0, 1]")
        if self.shot_noise < 0 or self.read_noise < 0:
            raise ValueError("noise coefficients must be non-negative")
        if any(g <= 0 for g in self.gains):
            raise ValueError("gains must be positive")

    def to_dict(self) -> dict:
        return {"s": self.exposure, "gains": list(self.gains),
                "a": self.shot_noise, "b": self.read_noise,
                "srgb": self.srgb, "bits": self.bits}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationParams":
        return cls(exposure=d["s"], gains=tuple(d["gains"]), shot_noise=d["a"],
                   read_noise=d["b"], srgb=d.get("srgb", True), bits=d.get("bits", 8))


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Standard piecewise sRGB transfer curve, linear [0, 1] -> encoded [0, 1]."""
    linear = np.clip(linear, 0.0, 1.0)
    low = linear <= 0.0031308
    out = np.where(low, 12.92 * linear,
                   1.055 * np.power(np.maximum(linear, 1e-12), 1.0 / 2.4) - 0.055)
    return out


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    encoded = np.clip(encoded, 0.0, 1.0)
    low = encoded <= 0.04045
    return np.where(low, encoded / 12.92, np.power((encoded + 0.055) / 1.055, 2.4))


def sensor_noise(signal: np.ndarray, params: DegradationParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian noise with variance a * signal + b (not clamped)."""
    variance = params.shot_noise * np.maximum(signal, 0.0) + params.read_noise
    return rng.normal(0.0, 1.0, size=signal.shape) * np.sqrt(variance)


def degrade(linear_image: np.ndarray, params: DegradationParams,
            rng: np.random.Generator) -> np.ndarray:
    """Linear radiance [0, 1] -> degraded 8-bit image."""
    linear_image = np.asarray(linear_image, dtype=np.float64)
    scaled = params.exposure * np.asarray(params.gains)[None, None, :] * linear_image
    noisy = scaled + sensor_noise(scaled, params, rng)
    clamped = np.clip(noisy, 0.0, 1.0)
    encoded = srgb_encode(clamped) if params.srgb else clamped
    levels = (1 << params.bits) - 1
    return np.floor(encoded * levels + 0.5).astype(np.uint8)


def encode_reference(linear_image: np.ndarray) -> np.ndarray:
    """Clean normal-light encode of a linear image (sRGB + 8-bit quantize)."""
    encoded = srgb_encode(np.asarray(linear_image, dtype=np.float64))
    return np.floor(encoded * 255.0 + 0.5).astype(np.uint8)
