"""Procedural test scenes with an analytic ground-truth renderer.

Scenes are unions of constant-density primitives (spheres and axis-aligned
boxes) shaded by a fixed directional light with an ambient floor, so the
radiance at a point depends only on geometry, never on the viewing ray.  The
reference renderer composites these fields with a literal, loop-based
transcription of the volume rendering weights; it shares no code with the
trainable pipeline and therefore doubles as its oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rendering import Camera, camera_rays
from .rng import rng_for


@dataclass(frozen=True)
class Primitive:
    kind: str                 # "sphere" | "box"
    center: tuple[float, float, float]
    size: tuple[float, float, float]   # sphere: (radius, radius, radius); box: half-extents
    albedo: tuple[float, float, float]
    density: float

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if any(not (0.0 < a < 1.0) for a in self.albedo):
            raise ValueError("albedo channels must lie in (0, 1)")
        if self.density <= 0:
            raise ValueError("density must be positive")


@dataclass(frozen=True)
class ProceduralScene:
    primitives: tuple[Primitive, ...]
    bound: float = 1.6
    light_dir: tuple[float, float, float] = (0.35, -0.25, 0.9)
    ambient: float = 0.25

    def __post_init__(self):
        for prim in self.primitives:
            extent = np.abs(np.asarray(prim.center)) + np.asarray(prim.size)
            if np.any(extent > self.bound + 1e-9):
                raise ValueError(f"primitive {prim} exceeds scene bound {self.bound}")


def build_scene(seed: int) -> ProceduralScene:
    """3 to 6 primitives: a near-neutral floor slab plus shaded objects.

    At least one object gets a saturated albedo (max/min channel ratio > 3),
    exercising the saturation relaxation in the color loss.
    """
    rng = rng_for(seed, "scene")
    floor_gray = rng.uniform(0.30, 0.40)
    floor_albedo = tuple(np.clip(floor_gray + rng.uniform(-0.02, 0.02, 3), 0.05, 0.95))
    prims = [Primitive("box", (0.0, 0.0, -0.45), (1.55, 1.55, 0.15),
                       floor_albedo, 60.0)]

    count = int(rng.integers(2, 6))  # 2..5 objects -> 3..6 primitives total
    angles = rng.uniform(0, 2 * math.pi)
    for i in range(count):
        angle = angles + 2 * math.pi * i / count + rng.uniform(-0.3, 0.3)
        dist = rng.uniform(0.18, 0.58)
        cx, cy = dist * math.cos(angle), dist * math.sin(angle)
        radius = rng.uniform(0.16, 0.34)
        if i == 0:
            # Saturated object: one dominant channel.
            hot = int(rng.integers(0, 3))
            albedo = np.full(3, rng.uniform(0.08, 0.16))
            albedo[hot] = rng.uniform(0.65, 0.85)
            albedo = tuple(albedo)
        else:
            albedo = tuple(rng.uniform(0.15, 0.75, 3))
        kind = "sphere" if rng.random() < 0.7 else "box"
        if kind == "sphere":
            size = (radius, radius, radius)
        else:
            size = tuple(rng.uniform(0.6, 1.0, 3) * radius)
        cz = -0.30 + size[2]
        prims.append(Primitive(kind, (cx, cy, cz), size, albedo, rng.uniform(50.0, 90.0)))
    return ProceduralScene(primitives=tuple(prims))


def _shade(scene: ProceduralScene, normals: np.ndarray) -> np.ndarray:
    light = np.asarray(scene.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lambert = np.maximum(normals @ light, 0.0)
    return scene.ambient + (1.0 - scene.ambient) * lambert


def scene_fields(scene: ProceduralScene, pts: np.ndarray):
    """Analytic density and radiance at points (m, 3).

    Density is constant inside a primitive and zero outside; radiance is the
    albedo shaded by the fixed light using the local surface-style normal
    (radial for spheres, dominant axis for boxes).  The first primitive
    containing a point wins where primitives overlap.
    """
    pts = np.asarray(pts, dtype=np.float64)
    m = pts.shape[0]
    sigma = np.zeros(m)
    rgb = np.zeros((m, 3))
    unclaimed = np.ones(m, dtype=bool)
    for prim in scene.primitives:
        center = np.asarray(prim.center)
        size = np.asarray(prim.size)
        rel = pts - center
        if prim.kind == "sphere":
            inside = (np.linalg.norm(rel, axis=1) <= size[0]) & unclaimed
            if not inside.any():
                continue
            normals = rel[inside]
            norms = np.linalg.norm(normals, axis=1, keepdims=True)
            normals = np.divide(normals, norms, out=np.zeros_like(normals), where=norms > 0)
        else:
            inside = np.all(np.abs(rel) <= size, axis=1) & unclaimed
            if not inside.any():
                continue
            frac = np.abs(rel[inside]) / size
            axis = np.argmax(frac, axis=1)
            normals = np.zeros((inside.sum(), 3))
            normals[np.arange(len(axis)), axis] = np.sign(rel[inside][np.arange(len(axis)), axis])
        sigma[inside] = prim.density
        rgb[inside] = np.asarray(prim.albedo)[None, :] * _shade(scene, normals)[:, None]
        unclaimed &= ~inside
    return sigma, rgb


def literal_volume_weights(sigma: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Brute-force transcription of the volume rendering weights.

    w_i = (1 - exp(-sigma_i * delta_i)) * exp(-(sigma_0 delta_0 + ... + sigma_{i-1} delta_{i-1}))

    Kept as an explicit accumulation loop on purpose: this is the oracle the
    vectorized differentiable implementation is checked against.
    """
    n = len(sigma)
    weights = np.zeros(n)
    accumulated = 0.0
    for i in range(n):
        weights[i] = (1.0 - math.exp(-sigma[i] * deltas[i])) * math.exp(-accumulated)
        accumulated += sigma[i] * deltas[i]
    return weights


def render_reference(scene: ProceduralScene, cam: Camera, n_samples: int = 96,
                     near: float = 2.0, far: float = 6.0) -> np.ndarray:
    """Normal-light linear radiance image from the analytic scene fields."""
    h, w = cam.height, cam.width
    ys, xs = np.mgrid[0:h, 0:w]
    origins, dirs = camera_rays(cam, xs.reshape(-1), ys.reshape(-1))
    t_mid = near + (far - near) * (np.arange(n_samples) + 0.5) / n_samples
    deltas = np.full(n_samples, (far - near) / n_samples)
    deltas[-1] = far - t_mid[-1]
    pts = origins[:, None, :] + dirs[:, None, :] * t_mid[None, :, None]
    sigma, rgb = scene_fields(scene, pts.reshape(-1, 3))
    sigma = sigma.reshape(-1, n_samples)
    rgb = rgb.reshape(-1, n_samples, 3)
    image = np.zeros((h * w, 3))
    for ray_idx in range(h * w):
        weights = literal_volume_weights(sigma[ray_idx], deltas)
        image[ray_idx] = weights @ rgb[ray_idx]
    return np.clip(image.reshape(h, w, 3), 0.0, 1.0)


def pose_rig(count: int, radius: float, elevation_deg: float,
             width: int = 64, height: int = 64, focal: float = 170.0,
             target: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> list[Camera]:
    """Cameras evenly spaced on a circle, all looking at the target point."""
    if count < 2:
        raise ValueError("need at least 2 cameras")
    target = np.asarray(target, dtype=np.float64)
    elevation = math.radians(elevation_deg)
    cams = []
    for i in range(count):
        azimuth = 2 * math.pi * i / count
        eye = radius * np.array([
            math.cos(azimuth) * math.cos(elevation),
            math.sin(azimuth) * math.cos(elevation),
            math.sin(elevation),
        ]) + target
        forward = target - eye
        forward /= np.linalg.norm(forward)
        z_axis = -forward
        up = np.array([0.0, 0.0, 1.0])
        x_axis = np.cross(up, z_axis)
        x_axis /= np.linalg.norm(x_axis)
        y_axis = np.cross(z_axis, x_axis)
        pose = np.column_stack([x_axis, y_axis, z_axis, eye])
        cams.append(Camera(width=width, height=height, focal=focal, pose=pose))
    return cams
