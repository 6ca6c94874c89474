"""Local contrast magnification for inspecting suspect images.

A bilateral filter estimates the local mean, its guided variant estimates
the local variance, and the image is renormalized pointwise by

    (x - mean) / (beta * local_std + (1 - beta) * global_std)

which amplifies low-amplitude structure — such as an adversarial
perturbation — far beyond what native contrast shows, while edges stay
put because the bilateral window does not average across them.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BilateralConfig:
    """Window and mixing parameters for the bilateral family.

    sigma_range is expressed in the same units as the filtered values;
    for [0, 1] images the default corresponds to 5 display-intensity
    levels out of 255.  radius None truncates the window at 3 sigma.
    """

    sigma_domain: float = 5.0
    sigma_range: float = 5.0 / 255.0
    radius: int | None = None
    beta: float = 0.8

    def __post_init__(self):
        if not self.sigma_domain > 0:
            raise ValueError(f"sigma_domain must be positive, got {self.sigma_domain}")
        if not self.sigma_range > 0:
            raise ValueError(f"sigma_range must be positive, got {self.sigma_range}")
        if self.radius is not None and self.radius < 1:
            raise ValueError(f"radius must be at least 1, got {self.radius}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def effective_radius(self):
        return self.radius if self.radius is not None else math.ceil(3.0 * self.sigma_domain)


def _check_pair(guide, values):
    guide = np.asarray(guide, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if guide.ndim != 3 or values.ndim != 3:
        raise ValueError("guide and values must be (H, W, C) arrays")
    if guide.shape[:2] != values.shape[:2]:
        raise ValueError(f"spatial shape mismatch: guide {guide.shape[:2]} vs values {values.shape[:2]}")
    return guide, values


def guided_bilateral(guide, values, cfg=BilateralConfig()):
    """Bilateral average of `values` with range weights from `guide`.

    Weight of neighbor q seen from p is exp(-|p-q|^2 / 2 sigma_d^2) times
    exp(-|guide_p - guide_q|^2 / 2 sigma_r^2), the photometric distance
    taken jointly over the guide's channels; weights over the in-image
    window are renormalized to sum to one, so borders need no padding.
    """
    guide, values = _check_pair(guide, values)
    h, w, _ = values.shape
    radius = cfg.effective_radius
    inv_dom = 1.0 / (2.0 * cfg.sigma_domain**2)
    inv_rng = 1.0 / (2.0 * cfg.sigma_range**2)

    num = np.zeros_like(values)
    den = np.zeros((h, w, 1))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            spatial = math.exp(-(dy * dy + dx * dx) * inv_dom)
            pr = slice(max(0, -dy), h - max(0, dy))
            pc = slice(max(0, -dx), w - max(0, dx))
            qr = slice(max(0, dy), h - max(0, -dy))
            qc = slice(max(0, dx), w - max(0, -dx))
            if pr.start >= pr.stop or pc.start >= pc.stop:
                continue
            diff = guide[qr, qc] - guide[pr, pc]
            weight = spatial * np.exp(-np.sum(diff * diff, axis=2) * inv_rng)
            num[pr, pc] += weight[:, :, None] * values[qr, qc]
            den[pr, pc] += weight[:, :, None]
    return num / den


def bilateral_filter(x, cfg=BilateralConfig()):
    """Edge-preserving smoothing: guided_bilateral with the image as guide."""
    x = np.asarray(x, dtype=np.float64)
    return guided_bilateral(x, x, cfg)


def local_stats(x, cfg=BilateralConfig()):
    """Bilateral local mean and standard deviation of x.

    The variance estimate averages (x - mean)^2 with range weights taken
    from x itself, so the statistics respect the image's edges; tiny
    negative variances from floating-point cancellation are clamped.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = bilateral_filter(x, cfg)
    var = guided_bilateral(x, (x - mean) ** 2, cfg)
    return mean, np.sqrt(np.maximum(var, 0.0))


def magnify(x, cfg=BilateralConfig()):
    """Local renormalization that reveals low-amplitude structure.

    The input is first mapped to [0, 1] by a joint min-max over all
    channels, which makes the output invariant to positive affine
    transforms of the input; a perfectly constant input maps to mid-gray.
    The renormalized field is then rescaled per channel to [0, 1] for
    display.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("magnify expects an (H, W, C) array")
    if not np.isfinite(x).all():
        raise ValueError("magnify input contains non-finite values")

    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.full_like(x, 0.5)
    u = (x - lo) / (hi - lo)

    mean, std = local_stats(u, cfg)
    global_std = u.std(axis=(0, 1))
    den = cfg.beta * std + (1.0 - cfg.beta) * global_std[None, None, :]
    field = np.divide(u - mean, den, out=np.zeros_like(u), where=den > 0)

    out = np.empty_like(field)
    for ch in range(field.shape[2]):
        fmin, fmax = field[:, :, ch].min(), field[:, :, ch].max()
        out[:, :, ch] = 0.5 if fmax == fmin else (field[:, :, ch] - fmin) / (fmax - fmin)
    return out
