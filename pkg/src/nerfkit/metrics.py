"""Image-quality metrics: MSE, PSNR, SSIM, and the evaluation CSV report.

Images are float arrays in [0, 1] with shape (H, W, 3).  SSIM follows the
common defaults (11x11 Gaussian window with sigma 1.5, K1=0.01, K2=0.03,
dynamic range 1.0, population covariance), computed per channel and
averaged; the windowed maps are cropped by the filter radius before
averaging so border padding never enters the score.
"""

from __future__ import annotations

import csv
import math

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(rendered: np.ndarray, reference: np.ndarray) -> None:
    if rendered.shape != reference.shape:
        raise ValueError(
            f"image shapes differ: {rendered.shape} vs {reference.shape}")


def mse(rendered: np.ndarray, reference: np.ndarray) -> float:
    _check_pair(rendered, reference)
    diff = np.asarray(rendered, dtype=np.float64) - np.asarray(reference, dtype=np.float64)
    return float(np.mean(diff * diff))


def psnr(rendered: np.ndarray, reference: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit peak; inf for identical."""
    m = mse(rendered, reference)
    if m == 0.0:
        return math.inf
    return -10.0 * math.log10(m)


def _gaussian_kernel() -> np.ndarray:
    radius = SSIM_WINDOW // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _window_filter(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian filtering, 'valid' region only."""
    k = _gaussian_kernel()
    from scipy.ndimage import correlate1d

    out = correlate1d(img, k, axis=0, mode="constant")
    out = correlate1d(out, k, axis=1, mode="constant")
    r = SSIM_WINDOW // 2
    return out[r:-r, r:-r]


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    ux = _window_filter(x)
    uy = _window_filter(y)
    uxx = _window_filter(x * x)
    uyy = _window_filter(y * y)
    uxy = _window_filter(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cxy = uxy - ux * uy
    num = (2 * ux * uy + c1) * (2 * cxy + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(rendered: np.ndarray, reference: np.ndarray) -> float:
    """Mean local structural similarity, per channel then averaged."""
    _check_pair(rendered, reference)
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape[0] < SSIM_WINDOW or rendered.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    return float(np.mean([
        _ssim_channel(rendered[:, :, c], reference[:, :, c]) for c in range(3)
    ]))


def write_eval_report(path, rows: list[dict]) -> dict:
    """Write per-image metric rows plus an aggregate mean row.

    Each row: {"image_id": ..., "psnr": ..., "ssim": ..., "mse": ...}.
    Returns the aggregate.  Infinite PSNR is written as "inf".
    """
    finite_psnr = [r["psnr"] for r in rows if math.isfinite(r["psnr"])]
    agg = {
        "image_id": "mean",
        "psnr": (sum(finite_psnr) / len(finite_psnr)) if finite_psnr else math.inf,
        "ssim": sum(r["ssim"] for r in rows) / len(rows),
        "mse": sum(r["mse"] for r in rows) / len(rows),
    }
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["image_id", "psnr", "ssim", "mse"])
        writer.writeheader()
        for r in rows + [agg]:
            writer.writerow({
                "image_id": r["image_id"],
                "psnr": "inf" if math.isinf(r["psnr"]) else f"{r['psnr']:.6f}",
                "ssim": f"{r['ssim']:.6f}",
                "mse": f"{r['mse']:.8e}",
            })
    return agg
