"""Matplotlib figures written next to the delimited reports."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curves(metrics: list[dict[str, float]], path: str) -> None:
    """Per-term loss curves over training steps, log-scaled where sensible."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    steps = [row["step"] for row in metrics]
    for key, style in (("total", "-"), ("data", "--"), ("color", ":"), ("smooth", "-.")):
        values = [row.get(key, 0.0) for row in metrics]
        if any(v > 0 for v in values):
            ax.plot(steps, values, style, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metric_bars(report, path: str) -> None:
    """Per-view PSNR and SSIM bars, with the baseline alongside when present."""
    names = [v.name for v in report.views]
    psnrs = [0.0 if math.isinf(v.psnr) else v.psnr for v in report.views]
    ssims = [v.ssim for v in report.views]
    x = range(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    width = 0.38
    ax1.bar([i - width / 2 for i in x], psnrs, width, label="model")
    ax2.bar([i - width / 2 for i in x], ssims, width, label="model")
    if report.baseline_views:
        bp = [0.0 if math.isinf(v.psnr) else v.psnr for v in report.baseline_views]
        bs = [v.ssim for v in report.baseline_views]
        ax1.bar([i + width / 2 for i in x], bp, width, label="baseline")
        ax2.bar([i + width / 2 for i in x], bs, width, label="baseline")
    for ax, ylabel in ((ax1, "PSNR (dB)"), (ax2, "SSIM")):
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
