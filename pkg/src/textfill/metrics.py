"""Image quality metrics and the benchmark report.

All metrics take images in [0, 1] (use to_unit for [-1, 1] tensors) and
compute in float64. The benchmark runs inference under each mask protocol
and reports mean l1%, PSNR, TV% and SSIM% for both the raw generated image
and the hard-composited output, plus the center-vs-object delta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.signal import correlate2d

METRIC_KEYS = ("l1_pct", "psnr_db", "tv_pct", "ssim_pct")
PSNR_CAP = 100.0


def to_unit(img: torch.Tensor | np.ndarray) -> np.ndarray:
    """Map a [-1, 1] image tensor to a float64 array in [0, 1]."""
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.clip((np.asarray(img, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def _as64(img) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def l1_percent(a, b) -> float:
    a, b = _as64(a), _as64(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(100.0 * np.mean(np.abs(a - b)))


def psnr(a, b, max_val: float = 1.0) -> float:
    a, b = _as64(a), _as64(b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(max_val * max_val / mse), PSNR_CAP))


def tv_percent(img) -> float:
    """Mean absolute forward difference, boundary row/column excluded, x100."""
    x = _as64(img)
    if x.ndim == 2:
        x = x[None]
    dx = np.abs(x[:, :-1, 1:] - x[:, :-1, :-1])
    dy = np.abs(x[:, 1:, :-1] - x[:, :-1, :-1])
    return float(100.0 * np.mean(dx + dy))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def to_gray(img) -> np.ndarray:
    """Channel-mean grayscale; accepts [H, W] or [C, H, W]."""
    x = _as64(img)
    if x.ndim == 3:
        x = x.mean(axis=0)
    return x


def ssim(a, b, max_val: float = 1.0, window: int = 11, sigma: float = 1.5) -> float:
    """Mean local structural similarity over valid window positions."""
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise ValueError(f"image {x.shape} smaller than the {window}x{window} window")
    w = _gaussian_window(window, sigma)
    c1 = (0.01 * max_val) ** 2
    c2 = (0.03 * max_val) ** 2
    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    xx = correlate2d(x * x, w, mode="valid") - mu_x * mu_x
    yy = correlate2d(y * y, w, mode="valid") - mu_y * mu_y
    xy = correlate2d(x * y, w, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def all_metrics(real, fake) -> dict:
    return {
        "l1_pct": l1_percent(real, fake),
        "psnr_db": psnr(real, fake),
        "tv_pct": tv_percent(fake),
        "ssim_pct": 100.0 * ssim(real, fake),
    }


@dataclass
class MetricsReport:
    modes: dict = field(default_factory=dict)  # mode -> {"raw": {...}, "composited": {...}, "n_images": int}
    delta: dict = field(default_factory=dict)  # variant -> metric -> |center - object|
    n_images: int = 0
    image_size: int = 0
    per_image: list = field(default_factory=list)

    def finish(self) -> "MetricsReport":
        if "center" in self.modes and "object" in self.modes:
            self.delta = {
                variant: {
                    k: abs(self.modes["center"][variant][k] - self.modes["object"][variant][k])
                    for k in METRIC_KEYS
                }
                for variant in ("raw", "composited")
            }
        return self

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "image_size": self.image_size,
            "modes": self.modes,
            "delta": self.delta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def metric_delta(center: float, other: float) -> float:
    """Table convention for the robustness delta: |center - object|."""
    return abs(center - other)
