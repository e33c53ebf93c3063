"""Analytic synthetic scenes for self-consistency checks and toy training."""

from __future__ import annotations

import numpy as np


def moving_bar(height: int, width: int, times, *, speed: float = 1.0, bar_width: float = 6.0,
               start: float = 4.0, low: float = 0.15, high: float = 0.85,
               vertical_gradient: bool = True) -> np.ndarray:
    """Bright vertical bar sliding right at ``speed`` px per unit time.

    Edges are area-sampled (box-filtered coverage per pixel column), so the
    intensity changes continuously with time.  Returns ``len(times) x H x W``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    cols = np.arange(width, dtype=np.float64)
    left = start + speed * times[:, None]
    right = left + bar_width
    cover = np.clip(np.minimum(cols + 1, right) - np.maximum(cols, left), 0.0, 1.0)
    frames = low + (high - low) * cover[:, None, :]
    frames = np.broadcast_to(frames, (times.size, height, width)).copy()
    if vertical_gradient:
        shade = 0.85 + 0.15 * np.linspace(0.0, 1.0, height)[:, None]
        frames *= shade
    return frames


def textured_pan(height: int, width: int, times, *, speed: float = 1.0, seed: int = 0,
                 low: float = 0.1, high: float = 0.9) -> np.ndarray:
    """Smooth random texture translating horizontally (periodic in x)."""
    rng = np.random.default_rng(seed)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    k = 4
    amp = rng.normal(size=(k, k))
    phase = rng.uniform(0, 2 * np.pi, size=(k, k))
    yy = np.arange(height)[:, None] / height
    out = np.empty((times.size, height, width))
    for n, t in enumerate(times):
        xx = (np.arange(width)[None, :] - speed * t) / width
        acc = np.zeros((height, width))
        for i in range(k):
            for j in range(k):
                acc += amp[i, j] * np.cos(2 * np.pi * (i * yy + (j + 1) * xx) + phase[i, j])
        out[n] = acc
    lo, hi = out.min(), out.max()
    return low + (high - low) * (out - lo) / (hi - lo)
