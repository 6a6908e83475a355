"""Camera rays, stratified sampling and differentiable volume compositing.

A pixel color is the transmittance-weighted sum of per-sample colors:

    w_i = (1 - exp(-sigma_i * delta_i)) * exp(-sum_{j<i} sigma_j * delta_j)

The same weights composite every per-sample quantity this pipeline cares
about: original color, enhanced color, the lighting scalar, the basis vector
and the enhancement coefficients.  Compositing is against a black background
(no background term).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import field as field_mod
from .field import FieldNetworks
from .tensor import Tensor, cumsum_exclusive, exp, group_rowsum, no_grad, reshape

DEFAULT_NEAR = 2.0
DEFAULT_FAR = 6.0
DEFAULT_SAMPLES = 64


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics plus a rigid camera-to-world transform.

    The camera looks down its -z axis; +x is right, +y is up in camera space.
    """

    width: int
    height: int
    focal: float
    pose: np.ndarray  # (3, 4) camera-to-world

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal must be positive")
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (3, 4):
            raise ValueError(f"pose must be 3x4, got {pose.shape}")
        rot = pose[:, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-5):
            raise ValueError("pose rotation block is not orthonormal")
        object.__setattr__(self, "pose", pose)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    pixel: tuple[int, int]
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        if not self.near < self.far:
            raise ValueError("near must be < far")
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"direction must be unit length, |d| = {norm}")


@dataclass(frozen=True)
class RaySamples:
    """Strictly ascending depths plus per-segment lengths along one ray."""

    depths: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        if self.depths.size < 2:
            raise ValueError("need at least 2 samples")
        if np.any(np.diff(self.depths) <= 0):
            raise ValueError("depths must be strictly ascending")
        if np.any(self.deltas <= 0):
            raise ValueError("segment lengths must be positive")


@dataclass
class RayRenderOutput:
    """Composited quantities for one ray (plain numpy, detached)."""

    rgb: np.ndarray          # (3,) original color
    enhanced: np.ndarray     # (3,) enhanced color
    v: float                 # integrated lighting scalar
    lighting: float          # same integral, exposed as the V map value
    basis: np.ndarray        # (3,) integrated color basis (R map value)
    alpha: float             # integrated enhancement gain
    gamma: np.ndarray        # (3,) integrated exponent tweak
    weights: np.ndarray      # (n,)
    opacity: float           # accumulated weight


def camera_rays(cam: Camera, xs: np.ndarray, ys: np.ndarray):
    """World-space origins and unit directions through the given pixel centers."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    dirs_cam = np.stack([
        (xs + 0.5 - cam.width / 2.0) / cam.focal,
        -(ys + 0.5 - cam.height / 2.0) / cam.focal,
        -np.ones_like(xs),
    ], axis=-1)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=-1, keepdims=True)
    rot = cam.pose[:, :3]
    dirs = dirs_cam @ rot.T
    origins = np.broadcast_to(cam.pose[:, 3], dirs.shape).copy()
    return origins, dirs


def generate_ray(cam: Camera, x: int, y: int,
                 near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> Ray:
    if not (0 <= x < cam.width and 0 <= y < cam.height):
        raise ValueError(f"pixel ({x}, {y}) outside {cam.width}x{cam.height} image")
    origins, dirs = camera_rays(cam, np.array([x]), np.array([y]))
    return Ray(origin=origins[0], direction=dirs[0], pixel=(x, y), near=near, far=far)


def _stratified_depths(near: float, far: float, n: int, count: int,
                       jitter: bool, rng: np.random.Generator | None):
    """Depths (count, n) and segment lengths (count, n); one sample per bin.

    The final segment runs to the far plane so that every length is positive
    and finite.
    """
    if n < 2:
        raise ValueError("need at least 2 samples per ray")
    bin_width = (far - near) / n
    edges = near + bin_width * np.arange(n, dtype=np.float64)
    if jitter:
        if rng is None:
            raise ValueError("jitter requires an rng")
        offsets = rng.random((count, n))
    else:
        offsets = np.full((count, n), 0.5)
    depths = edges[None, :] + offsets * bin_width
    deltas = np.empty_like(depths)
    deltas[:, :-1] = np.diff(depths, axis=1)
    deltas[:, -1] = far - depths[:, -1]
    # Guard the pathological jitter draw that lands exactly on a bin edge.
    np.maximum(deltas, 1e-9, out=deltas)
    return depths, deltas


def stratified_sample(ray: Ray, n: int, jitter: bool = False,
                      rng: np.random.Generator | None = None) -> RaySamples:
    depths, deltas = _stratified_depths(ray.near, ray.far, n, 1, jitter, rng)
    return RaySamples(depths=depths[0], deltas=deltas[0])


def compute_weights(sigma: Tensor, deltas) -> Tensor:
    """Volume rendering weights from densities and segment lengths.

    Accepts (R, n) or (n,) shapes; differentiable with respect to sigma.
    """
    if not isinstance(sigma, Tensor):
        sigma = Tensor(np.asarray(sigma), dtype=np.asarray(sigma).dtype)
    if isinstance(deltas, Tensor):
        deltas = deltas.data
    deltas = np.asarray(deltas, dtype=sigma.dtype)
    squeeze = sigma.ndim == 1
    if squeeze:
        sigma = reshape(sigma, (1, sigma.shape[0]))
        deltas = deltas.reshape(1, -1)
    optical = sigma * deltas
    transmittance = exp(-cumsum_exclusive(optical, axis=1))
    weights = (1.0 - exp(-optical)) * transmittance
    if squeeze:
        weights = reshape(weights, (weights.shape[1],))
    return weights


def composite(weights: Tensor, values) -> Tensor:
    """Weighted sum over samples of one ray: sum_i w_i * q_i."""
    if not isinstance(weights, Tensor):
        weights = Tensor(np.asarray(weights))
    if not isinstance(values, Tensor):
        values = Tensor(np.asarray(values), dtype=weights.dtype)
    if values.ndim == 1:
        if weights.shape != values.shape:
            raise ValueError(f"length mismatch: {weights.shape} vs {values.shape}")
        return (weights * values).sum()
    if weights.shape[0] != values.shape[0]:
        raise ValueError(f"length mismatch: {weights.shape} vs {values.shape}")
    w = reshape(weights, (weights.shape[0], 1))
    return (w * values).sum(axis=0)


def _composite_groups(weights: Tensor, values: Tensor, n: int) -> Tensor:
    """Batched composite: weights (R, n) with per-sample values (R*n, k)."""
    w = reshape(weights, (weights.shape[0] * n, 1))
    return group_rowsum(values * w, n)


def render_rays(nets: FieldNetworks, origins: np.ndarray, dirs: np.ndarray,
                near: float, far: float, n_samples: int,
                jitter: bool = False, rng: np.random.Generator | None = None,
                mode: str = "both", edit_gains: np.ndarray | None = None) -> dict[str, Tensor]:
    """Render a batch of rays through the full field pipeline.

    Returns composited per-ray tensors keyed by quantity; "c" and friends
    have one row per ray.  mode "raw" skips the enhancement head, "enhanced"
    and "both" evaluate it.
    """
    if mode not in ("raw", "enhanced", "both"):
        raise ValueError(f"unknown render mode {mode!r}")
    count = origins.shape[0]
    depths, deltas = _stratified_depths(near, far, n_samples, count, jitter, rng)
    dtype = nets.params[next(iter(nets.params))].dtype
    pts = (origins[:, None, :] + dirs[:, None, :] * depths[:, :, None])
    pts = Tensor(pts.reshape(count * n_samples, 3).astype(dtype))
    dirs_rep = Tensor(np.repeat(dirs, n_samples, axis=0).astype(dtype))

    feat, sigma = field_mod.query_density(nets, pts)
    sigma_rn = reshape(sigma, (count, n_samples))
    weights = compute_weights(sigma_rn, deltas.astype(dtype))
    v, r = field_mod.query_decomposition(nets, feat, dirs_rep)
    c = field_mod.point_colors(v, r)

    out: dict[str, Tensor] = {
        "c": _composite_groups(weights, c, n_samples),
        "v": _composite_groups(weights, v, n_samples),
        "r": _composite_groups(weights, r, n_samples),
        "weights": weights,
        "opacity": weights.sum(axis=1, keepdims=True),
    }
    if mode != "raw":
        alpha, gamma = field_mod.query_enh_coeffs(nets, feat)
        v_hat = field_mod.enhance(v, alpha, gamma, nets.config.gamma0)
        if edit_gains is not None:
            v_hat = v_hat * Tensor(np.asarray(edit_gains, dtype=dtype).reshape(1, 3))
        c_hat = v_hat * r
        out["c_hat"] = _composite_groups(weights, c_hat, n_samples)
        out["alpha"] = _composite_groups(weights, alpha, n_samples)
        out["gamma"] = _composite_groups(weights, gamma, n_samples)
    return out


def render_ray(nets: FieldNetworks, ray: Ray, n_samples: int = DEFAULT_SAMPLES,
               mode: str = "both", jitter: bool = False,
               rng: np.random.Generator | None = None) -> RayRenderOutput:
    """Full pipeline for a single ray; deterministic when jitter is off."""
    res = render_rays(nets, ray.origin[None, :], ray.direction[None, :],
                      ray.near, ray.far, n_samples, jitter=jitter, rng=rng, mode=mode)
    enhanced = res.get("c_hat")
    alpha = res.get("alpha")
    gamma = res.get("gamma")
    v_val = float(res["v"].data[0, 0])
    return RayRenderOutput(
        rgb=res["c"].data[0].copy(),
        enhanced=enhanced.data[0].copy() if enhanced is not None else np.zeros(3),
        v=v_val,
        lighting=v_val,
        basis=res["r"].data[0].copy(),
        alpha=float(alpha.data[0, 0]) if alpha is not None else 0.0,
        gamma=gamma.data[0].copy() if gamma is not None else np.zeros(3),
        weights=res["weights"].data[0].copy(),
        opacity=float(res["opacity"].data[0, 0]),
    )


def render_image(nets: FieldNetworks, cam: Camera, near: float = DEFAULT_NEAR,
                 far: float = DEFAULT_FAR, n_samples: int = DEFAULT_SAMPLES,
                 mode: str = "both", edit_gains: np.ndarray | None = None,
                 threads: int = 1, chunk_rows: int = 8) -> dict[str, np.ndarray]:
    """Deterministic eval-mode render of every pixel (bin centers, no jitter).

    Returns float images: "rgb", "enhanced", composited coefficient maps
    ("alpha", "gamma"), opacity, plus opacity-normalized "lighting" and
    "basis" visualization maps.
    """
    h, w = cam.height, cam.width
    bufs = {
        "rgb": np.zeros((h, w, 3), dtype=np.float32),
        "enhanced": np.zeros((h, w, 3), dtype=np.float32),
        "v": np.zeros((h, w), dtype=np.float32),
        "basis_raw": np.zeros((h, w, 3), dtype=np.float32),
        "alpha": np.zeros((h, w), dtype=np.float32),
        "gamma": np.zeros((h, w, 3), dtype=np.float32),
        "opacity": np.zeros((h, w), dtype=np.float32),
    }

    def run_rows(y0: int, y1: int):
        ys, xs = np.mgrid[y0:y1, 0:w]
        origins, dirs = camera_rays(cam, xs.reshape(-1), ys.reshape(-1))
        with no_grad():
            res = render_rays(nets, origins, dirs, near, far, n_samples, mode=mode,
                              edit_gains=edit_gains)
        rows = y1 - y0
        bufs["rgb"][y0:y1] = res["c"].data.reshape(rows, w, 3)
        bufs["v"][y0:y1] = res["v"].data.reshape(rows, w)
        bufs["basis_raw"][y0:y1] = res["r"].data.reshape(rows, w, 3)
        bufs["opacity"][y0:y1] = res["opacity"].data.reshape(rows, w)
        if mode != "raw":
            bufs["enhanced"][y0:y1] = res["c_hat"].data.reshape(rows, w, 3)
            bufs["alpha"][y0:y1] = res["alpha"].data.reshape(rows, w)
            bufs["gamma"][y0:y1] = res["gamma"].data.reshape(rows, w, 3)

    spans = [(y, min(y + chunk_rows, h)) for y in range(0, h, chunk_rows)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: run_rows(*s), spans))
    else:
        for span in spans:
            run_rows(*span)

    denom = np.maximum(bufs["opacity"], 1e-8)
    bufs["lighting"] = bufs["v"] / denom
    bufs["basis"] = bufs["basis_raw"] / denom[:, :, None]
    return bufs
