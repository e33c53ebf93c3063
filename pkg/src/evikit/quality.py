"""Blur synthesis, skip-k dataset protocol and image metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physical import ExposedFrame

PSNR_CAP = 99.0


@dataclass(frozen=True)
class BlurProtocol:
    """``frames_per_blur`` sharp frames are averaged per blurry frame and
    ``skip`` sharp frames between consecutive blurry frames are held out."""

    frames_per_blur: int = 11
    skip: int = 1
    fps: float = 240.0

    def __post_init__(self):
        if self.frames_per_blur < 1 or self.frames_per_blur % 2 == 0:
            raise ValueError(f"frames_per_blur must be odd and >= 1, got {self.frames_per_blur}")
        if self.skip < 0:
            raise ValueError(f"skip must be >= 0, got {self.skip}")
        if not self.fps > 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")

    @property
    def stride(self) -> int:
        return self.frames_per_blur + self.skip

    def count(self, n_frames: int) -> int:
        """Number of complete blur windows in a sequence of ``n_frames``."""
        if n_frames < self.frames_per_blur:
            return 0
        return (n_frames - self.frames_per_blur) // self.stride + 1


@dataclass
class BlurSet:
    blurry: list[ExposedFrame]
    sharp_centers: list[np.ndarray]       # middle constituent of each blur window
    ground_truth: list[list[np.ndarray]]  # skipped frames between window k and k+1
    gt_times: list[list[float]]
    window_indices: list[range]


def exposure_mean(frames) -> np.ndarray:
    """Per-pixel mean of a frame stack, taken around the first frame.

    Averaging deviations from ``frames[0]`` makes a static stack return its
    frame bit-for-bit; a plain mean of equal values can round away from it.
    """
    frames = np.asarray(frames, dtype=np.float64)
    first = frames[0]
    return first + (frames - first).mean(axis=0)


def synthesize_blur(frames, timestamps, proto: BlurProtocol) -> BlurSet:
    """Average consecutive windows of sharp frames into blurry exposures.

    ``frames`` is a ``K x H x W`` (or ``K x H x W x 3``) stack in linear
    intensity.  The exposure of each blurry frame runs from its first to its
    last constituent timestamp.
    """
    frames = np.asarray(frames, dtype=np.float64)
    ts = np.asarray(timestamps, dtype=np.float64)
    if frames.shape[0] != ts.size:
        raise ValueError(f"{frames.shape[0]} frames but {ts.size} timestamps")
    if frames.shape[0] < proto.frames_per_blur + proto.skip:
        raise ValueError(
            f"{frames.shape[0]} frames cannot hold a {proto.frames_per_blur}+{proto.skip} window"
        )
    n_blur = proto.count(frames.shape[0])
    out = BlurSet([], [], [], [], [])
    half = proto.frames_per_blur // 2
    for k in range(n_blur):
        lo = k * proto.stride
        hi = lo + proto.frames_per_blur
        t_s, t_e = float(ts[lo]), float(ts[hi - 1])
        if t_e == t_s:  # single-frame "exposure": give it one frame period
            t_e = t_s + 1.0 / proto.fps
        out.blurry.append(ExposedFrame(exposure_mean(frames[lo:hi]), t_s, t_e))
        out.sharp_centers.append(frames[lo + half])
        out.window_indices.append(range(lo, hi))
        if k + 1 < n_blur:
            gap = range(hi, hi + proto.skip)
            out.ground_truth.append([frames[g] for g in gap])
            out.gt_times.append([float(ts[g]) for g in gap])
    return out


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, MSE taken over all channels jointly.

    Capped at 99 dB so identical images give a finite sentinel.
    """
    if not peak > 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, peak: float = 1.0, size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over all fully-contained ``size x size`` windows.

    Color images are scored per channel and averaged.
    """
    a, b = _check_pair(a, b)
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., ch], b[..., ch], peak, size, sigma, k1, k2)
                              for ch in range(a.shape[2])]))
    if a.ndim != 2 or min(a.shape) < size:
        raise ValueError(f"ssim needs 2-D images at least {size}x{size}, got {a.shape}")
    g = gaussian_window(size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def charbonnier(pred, target, eps: float = 1e-6) -> float:
    """Mean of ``sqrt((pred - target)^2 + eps^2)``.

    Written as ``eps + mean(hypot(d, eps) - eps)`` so identical inputs give
    exactly ``eps``.
    """
    pred, target = _check_pair(pred, target)
    d = pred - target
    return float(eps + np.mean(np.hypot(d, eps) - eps))


def charbonnier_grad(pred, target, eps: float = 1e-6) -> np.ndarray:
    """Gradient of :func:`charbonnier` with respect to ``pred``."""
    pred, target = _check_pair(pred, target)
    d = pred - target
    return d / np.hypot(d, eps) / d.size
