"""Contrast-threshold event simulation from a sharp, high frame-rate sequence.

Each pixel follows ``L(t) = log(I(t) + log_eps)``, interpolated linearly in
log space between frames.  A pixel keeps a reference level; every time
``L`` reaches ``reference +/- c`` an event of that sign is emitted at the exact
crossing instant and the reference moves by ``c``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .events import EventStream, polarity_image

# Relative slack on threshold comparisons: log() rounding must not lose a
# crossing that lands exactly on a multiple of c.
CROSSING_RTOL = 1e-9

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SimConfig:
    c_mean: float = 0.2
    c_std: float = 0.03
    c_mode: str = "fixed"
    log_eps: float = 1e-3
    seed: int = 0
    noise_rate: float = 0.0
    hot_pixel_fraction: float = 0.0
    hot_pixel_rate: float = 1000.0
    c_floor: float = 0.01

    def __post_init__(self):
        if not self.c_mean > 0:
            raise ValueError(f"c_mean must be > 0, got {self.c_mean}")
        if not self.c_std >= 0:
            raise ValueError(f"c_std must be >= 0, got {self.c_std}")
        if self.c_mode not in ("fixed", "gaussian-per-pixel"):
            raise ValueError(f"c_mode must be 'fixed' or 'gaussian-per-pixel', got {self.c_mode!r}")
        if not self.log_eps > 0:
            raise ValueError(f"log_eps must be > 0, got {self.log_eps}")
        if not self.noise_rate >= 0:
            raise ValueError(f"noise_rate must be >= 0, got {self.noise_rate}")
        if not 0 <= self.hot_pixel_fraction < 1:
            raise ValueError(f"hot_pixel_fraction must be in [0, 1), got {self.hot_pixel_fraction}")
        if not self.hot_pixel_rate > 0:
            raise ValueError(f"hot_pixel_rate must be > 0, got {self.hot_pixel_rate}")
        if not 0 < self.c_floor <= self.c_mean:
            raise ValueError(f"c_floor must be in (0, c_mean], got {self.c_floor}")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown SimConfig key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FrameSequence:
    """Grayscale frames in ``[0, 1]`` with strictly increasing timestamps."""

    frames: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if frames.ndim != 3:
            raise ValueError(f"frames must be K x H x W, got shape {frames.shape}")
        if frames.shape[0] != ts.size:
            raise ValueError(f"{frames.shape[0]} frames but {ts.size} timestamps")
        if not np.all(np.isfinite(frames)) or frames.min(initial=0) < 0 or frames.max(initial=0) > 1:
            raise ValueError("frame values must be finite and within [0, 1]")
        if not np.all(np.isfinite(ts)) or np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be finite and strictly increasing")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def from_frames(cls, frames: Sequence[np.ndarray], timestamps=None, fps=None) -> "FrameSequence":
        shapes = {np.shape(f) for f in frames}
        if len(shapes) > 1:
            raise ValueError(f"frames have mismatched sizes: {sorted(shapes)}")
        stack = np.stack([to_luminance(f) for f in frames])
        if timestamps is None:
            if fps is None or not fps > 0:
                raise ValueError("give timestamps or a positive fps")
            timestamps = np.arange(len(frames)) / float(fps)
        return cls(stack, timestamps)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]

    @property
    def window(self) -> tuple[float, float]:
        return float(self.timestamps[0]), float(self.timestamps[-1])


def to_luminance(image) -> np.ndarray:
    """Gray passthrough, or ``0.299 R + 0.587 G + 0.114 B`` for ``H x W x 3``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    if img.ndim != 2:
        raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")
    return img


def sample_thresholds(cfg: SimConfig, shape) -> np.ndarray:
    """Per-pixel contrast thresholds; drawn once per pixel for the gaussian mode."""
    if cfg.c_mode == "fixed" or cfg.c_std == 0:
        return np.full(shape, float(cfg.c_mean))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    c = rng.normal(cfg.c_mean, cfg.c_std, size=shape)
    return np.maximum(c, cfg.c_floor)


def _crossings(logs: np.ndarray, times: np.ndarray, c: np.ndarray):
    """Threshold crossings for a block of pixels.

    ``logs`` is ``K x P`` (frames x pixels) and ``c`` has length ``P``.
    Returns ``(pixel, t, p, segment, rank)`` arrays, unsorted.
    """
    n_frames, n_pix = logs.shape
    base = logs[0]
    level = np.zeros(n_pix, dtype=np.int64)  # reference = base + level * c
    slack = CROSSING_RTOL
    out = []
    for s in range(n_frames - 1):
        a, b = logs[s], logs[s + 1]
        ref = base + level * c
        up = np.floor((b - ref) / c + slack).astype(np.int64)
        down = np.floor((ref - b) / c + slack).astype(np.int64)
        steps = np.where(up > 0, up, np.where(down > 0, -down, 0))
        fired = np.flatnonzero(steps)
        if fired.size == 0:
            continue
        counts = np.abs(steps[fired])
        sign = np.sign(steps[fired])
        pix = np.repeat(fired, counts)
        first = np.cumsum(counts) - counts
        rank = np.arange(pix.size) - np.repeat(first, counts) + 1
        sgn = np.repeat(sign, counts)
        target = ref[pix] + sgn * rank * c[pix]
        da = a[pix]
        delta = b[pix] - da
        safe = np.where(delta == 0, 1.0, delta)
        frac = np.where(delta == 0, 1.0, (target - da) / safe)
        frac = np.clip(frac, 0.0, 1.0)
        t0, t1 = times[s], times[s + 1]
        t = t0 + frac * (t1 - t0)
        out.append((pix, t, sgn.astype(np.int8), np.full(pix.size, s), rank))
        level += steps
    if not out:
        empty = np.zeros(0, np.int64)
        return empty, np.zeros(0), np.zeros(0, np.int8), empty, empty
    return tuple(np.concatenate(col) for col in zip(*out))


def _noise_events(cfg: SimConfig, shape, window):
    h, w = shape
    t0, t1 = window
    dur = t1 - t0
    pix, ts, ps = [], [], []
    if cfg.noise_rate > 0 and dur > 0:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        counts = rng.poisson(cfg.noise_rate * dur, size=h * w)
        p_idx = np.repeat(np.arange(h * w), counts)
        # (t0, t1]: uniform on [0, 1) mirrored to (0, 1]
        ts.append(t1 - rng.random(p_idx.size) * dur)
        ps.append(np.where(rng.random(p_idx.size) < 0.5, -1, 1).astype(np.int8))
        pix.append(p_idx)
    n_hot = int(math.floor(cfg.hot_pixel_fraction * h * w))
    if n_hot > 0 and dur > 0:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        hot = np.sort(rng.choice(h * w, size=n_hot, replace=False))
        period = 1.0 / cfg.hot_pixel_rate
        phase = rng.random(n_hot) * period
        for px, ph in zip(hot, phase):
            t = t0 + ph + period * np.arange(int(math.floor((dur - ph) / period)) + 1)
            t = t[(t > t0) & (t <= t1)]
            ts.append(t)
            ps.append(np.ones(t.size, np.int8))
            pix.append(np.full(t.size, px))
    if not pix:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int8)
    return np.concatenate(pix), np.concatenate(ts), np.concatenate(ps)


def simulate(seq: FrameSequence, cfg: SimConfig | None = None, workers: int = 1) -> EventStream:
    """Convert ``seq`` into an event stream spanning its first..last timestamp.

    Pixels are independent, so ``workers > 1`` splits the sensor into row
    blocks; the merge is by ``(t, pixel, emission order)`` and reproduces the
    serial output exactly.
    """
    cfg = cfg or SimConfig()
    if len(seq) < 2:
        raise ValueError("need at least 2 frames to simulate events")
    k, h, w = seq.frames.shape
    logs = np.log(seq.frames + cfg.log_eps).reshape(k, h * w)
    c = sample_thresholds(cfg, (h, w)).reshape(-1)
    times = seq.timestamps

    workers = max(1, min(int(workers), h))
    if workers == 1:
        parts = [_crossings(logs, times, c)]
    else:
        bounds = np.linspace(0, h, workers + 1).astype(int) * w
        blocks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

        def run(block):
            lo, hi = block
            pix, t, p, seg, rank = _crossings(logs[:, lo:hi], times, c[lo:hi])
            return pix + lo, t, p, seg, rank

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    pix, t, p, seg, rank = (np.concatenate(col) for col in zip(*parts))

    n_pix, n_t, n_p = _noise_events(cfg, (h, w), seq.window)
    if n_pix.size:
        pix = np.concatenate([pix, n_pix])
        t = np.concatenate([t, n_t])
        p = np.concatenate([p, n_p])
        seg = np.concatenate([seg, np.full(n_pix.size, k)])
        rank = np.concatenate([rank, np.arange(n_pix.size)])

    order = np.lexsort((rank, seg, pix, t))
    pix = pix[order]
    return EventStream(
        pix % w, pix // w, t[order], p[order], seq.window, w, h, sort=False,
    )


def estimate_threshold(seq: FrameSequence, stream: EventStream, log_eps: float = 1e-3) -> float:
    """Least-squares contrast threshold from frame log-differences.

    Minimises ``sum (dL - c * S)^2`` over pixels and consecutive frame pairs,
    where ``S`` is the pixel's polarity sum between the two frames.
    """
    if len(stream) == 0:
        raise ValueError("cannot estimate a threshold from an empty event stream")
    if seq.shape != stream.shape:
        raise ValueError(f"sequence is {seq.shape}, stream is {stream.shape}")
    logs = np.log(seq.frames + log_eps)
    num = 0.0
    den = 0.0
    for s in range(len(seq) - 1):
        dl = logs[s + 1] - logs[s]
        acc = polarity_image(stream, seq.timestamps[s], seq.timestamps[s + 1]).astype(np.float64)
        num += float(np.sum(dl * acc))
        den += float(np.sum(acc * acc))
    if den == 0:
        raise ValueError("no events fall between the sequence frames")
    c_hat = num / den
    if not c_hat > 0:
        raise ValueError(f"non-positive threshold estimate {c_hat}")
    return c_hat
