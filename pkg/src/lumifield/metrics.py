"""Image quality metrics, report generation, baseline and editing renders."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .dataset import LoadedDataset
from .field import FieldNetworks
from .images import byte_to_float, read_png
from .rendering import Camera, render_image


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Identical images have zero error; that case reports math.inf as the
    "identical" sentinel.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def rec601_luma(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    kernel = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def _windowed_moments(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode Gaussian filtering."""
    size = len(kernel)
    h, w = img.shape
    out_h, out_w = h - size + 1, w - size + 1
    rows = np.empty((h, out_w))
    for i in range(h):
        rows[i] = np.convolve(img[i], kernel, mode="valid")
    cols = np.empty((out_h, out_w))
    for j in range(out_w):
        cols[:, j] = np.convolve(rows[:, j], kernel, mode="valid")
    return cols


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, dynamic_range: float = 1.0) -> float:
    """Single-scale SSIM with a Gaussian window on Rec.601 luma."""
    a = rec601_luma(a)
    b = rec601_luma(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than {window}x{window} window")
    kernel = _gaussian_kernel(window, sigma)
    mu_a = _windowed_moments(a, kernel)
    mu_b = _windowed_moments(b, kernel)
    aa = _windowed_moments(a * a, kernel)
    bb = _windowed_moments(b * b, kernel)
    ab = _windowed_moments(a * b, kernel)
    var_a = aa - mu_a ** 2
    var_b = bb - mu_b ** 2
    cov = ab - mu_a * mu_b
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / \
        ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(score.mean())


def gray_world_stats(image: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-channel means and the population variance of those three means."""
    image = np.asarray(image, dtype=np.float64)
    means = image.reshape(-1, 3).mean(axis=0)
    return means, float(np.var(means))


# ----------------------------------------------------------------------
# renders used for comparison and editing
# ----------------------------------------------------------------------

def baseline_render(nets: FieldNetworks, cam: Camera, near: float, far: float,
                    n_samples: int, gamma_fixed: float = 2.2,
                    threads: int = 1) -> np.ndarray:
    """Raw (unenhanced) render brightened by a global fixed gamma curve."""
    bufs = render_image(nets, cam, near=near, far=far, n_samples=n_samples,
                        mode="raw", threads=threads)
    raw = np.clip(bufs["rgb"], 0.0, 1.0)
    return np.power(raw, 1.0 / gamma_fixed)


@dataclass(frozen=True)
class EditSpec:
    """Channel gains applied to the enhanced lighting before basis multiply."""

    gains: tuple[float, float, float]

    def __post_init__(self):
        if any(g <= 0 for g in self.gains):
            raise ValueError("edit gains must be positive")


WARM_EDIT = EditSpec(gains=(1.15, 1.0, 0.85))
COLD_EDIT = EditSpec(gains=(0.85, 1.0, 1.15))


def edit_render(nets: FieldNetworks, cam: Camera, edit: EditSpec,
                near: float, far: float, n_samples: int,
                threads: int = 1) -> dict[str, np.ndarray]:
    """Enhanced render with the lighting recolored; geometry and basis untouched."""
    return render_image(nets, cam, near=near, far=far, n_samples=n_samples,
                        mode="both", edit_gains=np.asarray(edit.gains),
                        threads=threads)


# ----------------------------------------------------------------------
# evaluation report
# ----------------------------------------------------------------------

@dataclass
class ViewMetrics:
    name: str
    psnr: float
    ssim: float
    channel_means: tuple[float, float, float]


@dataclass
class MetricReport:
    views: list[ViewMetrics]
    baseline_views: list[ViewMetrics] | None = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([v.psnr for v in self.views]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([v.ssim for v in self.views]))

    @property
    def mean_intensity(self) -> float:
        return float(np.mean([v.channel_means for v in self.views]))

    def to_tsv(self) -> str:
        lines = ["view\tpsnr_db\tssim\tmean_r\tmean_g\tmean_b"]
        rows = list(self.views)
        if self.baseline_views:
            rows = rows + self.baseline_views
        for v in rows:
            p = "identical" if math.isinf(v.psnr) else f"{v.psnr:.4f}"
            lines.append(f"{v.name}\t{p}\t{v.ssim:.4f}\t"
                         + "\t".join(f"{m:.4f}" for m in v.channel_means))
        lines.append(f"aggregate_mean\t{self.mean_psnr:.4f}\t{self.mean_ssim:.4f}\t"
                     + "\t".join(f"{m:.4f}" for m in np.mean(
                         [v.channel_means for v in self.views], axis=0)))
        if self.baseline_views:
            bp = float(np.mean([v.psnr for v in self.baseline_views]))
            bs = float(np.mean([v.ssim for v in self.baseline_views]))
            lines.append(f"baseline_mean\t{bp:.4f}\t{bs:.4f}\t-\t-\t-")
            lines.append(f"delta_over_baseline\t{self.mean_psnr - bp:.4f}\t"
                         f"{self.mean_ssim - bs:.4f}\t-\t-\t-")
        return "\n".join(lines) + "\n"


def evaluate_views(nets: FieldNetworks, dataset: LoadedDataset,
                   n_samples: int, mode: str = "enhanced",
                   gamma_fixed: float = 2.2, threads: int = 1,
                   split: str = "test") -> tuple[MetricReport, list[np.ndarray]]:
    """Render the held-out views and score them against their references.

    mode "enhanced" scores the enhanced output; mode "gamma" scores the raw
    render pushed through the fixed gamma curve (the dark-field baseline).
    """
    m = dataset.manifest
    recs = m.split_gt_frames(split)
    if not recs:
        raise ValueError(f"dataset has no {split!r} reference frames")
    views = []
    renders = []
    for rec in recs:
        cam = rec.camera(m.width, m.height, m.focal)
        ref = byte_to_float(read_png(os.path.join(dataset.directory, rec.file)))
        if mode == "enhanced":
            bufs = render_image(nets, cam, near=m.near, far=m.far,
                                n_samples=n_samples, mode="both", threads=threads)
            img = np.clip(bufs["enhanced"], 0.0, 1.0)
        elif mode == "gamma":
            img = baseline_render(nets, cam, m.near, m.far, n_samples,
                                  gamma_fixed=gamma_fixed, threads=threads)
        elif mode == "raw":
            bufs = render_image(nets, cam, near=m.near, far=m.far,
                                n_samples=n_samples, mode="raw", threads=threads)
            img = np.clip(bufs["rgb"], 0.0, 1.0)
        else:
            raise ValueError(f"unknown eval mode {mode!r}")
        means, _ = gray_world_stats(img)
        views.append(ViewMetrics(name=rec.file, psnr=psnr(img, ref),
                                 ssim=ssim(img, ref),
                                 channel_means=tuple(float(x) for x in means)))
        renders.append(img)
    return MetricReport(views=views), renders
