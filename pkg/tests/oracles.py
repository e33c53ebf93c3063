"""Independent reference implementations used only by the tests.

Each oracle takes a different route from the library code it checks:
dense time stepping instead of closed-form crossings, per-event Python loops
instead of vectorised scatters, direct quadrature instead of segment sums.
"""

from __future__ import annotations

import math

import numba
import numpy as np


# -- simulator -----------------------------------------------------------------


@numba.njit(cache=True)
def _dense_pixel(logs, times, c, substeps, out_t, out_p):
    """March one pixel's log-intensity with ``substeps`` steps per frame interval.

    Inside a step the signal is linear, so a crossing's time is refined by
    linear interpolation between the two step samples.
    """
    ref = logs[0]
    n = 0
    for k in range(logs.shape[0] - 1):
        t0, t1 = times[k], times[k + 1]
        l0, l1 = logs[k], logs[k + 1]
        prev_t, prev_l = t0, l0
        for s in range(1, substeps + 1):
            frac = s / substeps
            cur_t = t0 + (t1 - t0) * frac
            cur_l = l0 + (l1 - l0) * frac
            while True:
                if cur_l >= ref + c:
                    level, pol = ref + c, 1
                elif cur_l <= ref - c:
                    level, pol = ref - c, -1
                else:
                    break
                if cur_l == prev_l:
                    te = cur_t
                else:
                    te = prev_t + (cur_t - prev_t) * (level - prev_l) / (cur_l - prev_l)
                out_t[n] = te
                out_p[n] = pol
                n += 1
                ref = level
            prev_t, prev_l = cur_t, cur_l
    return n


def dense_events(frames, times, c: float, log_eps: float = 1e-3, substeps: int = 10_000):
    """Per-pixel ``(t, p)`` lists from dense stepping; ``frames`` is ``K x H x W``."""
    frames = np.asarray(frames, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    k, h, w = frames.shape
    logs = np.log(frames + log_eps).reshape(k, h * w)
    span = np.abs(np.diff(logs, axis=0)).sum(axis=0)
    out = {}
    for pix in range(h * w):
        cap = int(span[pix] / c) + 4 * k + 8
        ts = np.zeros(cap)
        ps = np.zeros(cap, dtype=np.int64)
        m = _dense_pixel(logs[:, pix].copy(), times, c, substeps, ts, ps)
        out[(pix % w, pix // w)] = (ts[:m].copy(), ps[:m].copy())
    return out


def stream_by_pixel(stream):
    out = {}
    for e in stream:
        out.setdefault((e.x, e.y), []).append((e.t, e.p))
    return out


# -- event algebra -------------------------------------------------------------


def naive_slice(events, a, b):
    return [e for e in events if a < e[2] <= b]


def naive_polarity_sum(events, x, y, a, b):
    total = 0
    for ex, ey, et, ep in events:
        if ex == x and ey == y and a < et <= b:
            total += ep
    return total


# -- voxel -----------------------------------------------------------------------


def naive_voxel(events, window, n, h, w):
    """Per-event loop with explicit tent weights over the ``n + 2`` bin centres."""
    t0, t1 = window
    bins = n + 2
    grid = np.zeros((bins, h, w))
    centres = [t0 + (t1 - t0) * k / (bins - 1) for k in range(bins)]
    spacing = (t1 - t0) / (bins - 1)
    for x, y, t, p in events:
        for k, ck in enumerate(centres):
            weight = max(0.0, 1.0 - abs(t - ck) / spacing)
            grid[k, y, x] += p * weight
    return grid


# -- physical model --------------------------------------------------------------


def quadrature_edi(image, events, t_s, t_e, t_target, c, samples: int = 200_000):
    """Midpoint-rule integral of ``exp(c * S(t_target, t))`` on a dense grid, per pixel."""
    h, w = image.shape
    ts = t_s + (np.arange(samples) + 0.5) * (t_e - t_s) / samples
    den = np.full((h, w), t_e - t_s)
    by_pixel = {}
    for x, y, t, p in events:
        if t_s < t <= t_e:
            by_pixel.setdefault((x, y), []).append((t, p))
    for (x, y), evs in by_pixel.items():
        s = np.zeros(samples)
        for t, p in evs:
            if t > t_target:
                s += np.where(ts >= t, p, 0)
            else:
                s -= np.where(ts < t, p, 0)
        den[y, x] = np.exp(c * s).mean() * (t_e - t_s)
    out = image * (t_e - t_s) / den
    return out


# -- metrics ---------------------------------------------------------------------


def fsum_mean(frames):
    frames = np.asarray(frames, dtype=np.float64)
    flat = frames.reshape(frames.shape[0], -1)
    return np.array([math.fsum(flat[:, j]) / frames.shape[0]
                     for j in range(flat.shape[1])]).reshape(frames.shape[1:])


def loop_ssim(a, b, peak=1.0, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Window-by-window SSIM with an explicit 2-D Gaussian, valid positions only."""
    r = np.arange(size) - (size - 1) / 2
    g1 = np.exp(-(r**2) / (2 * sigma**2))
    g = np.outer(g1, g1)
    g /= g.sum()
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            ma, mb = (g * pa).sum(), (g * pb).sum()
            va = (g * (pa - ma) ** 2).sum()
            vb = (g * (pb - mb) ** 2).sum()
            cov = (g * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


# -- tensor ops ------------------------------------------------------------------


def loop_conv2d(x, w, b, stride, padding):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.zeros((cin, h + 2 * padding, wd + 2 * padding))
    xp[:, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride:i * stride + k, j * stride:j * stride + k]
                out[o, i, j] = (patch * w[o]).sum() + b[o]
    return out


def scatter_conv_transpose2d(x, w, b, stride, padding):
    """Each input pixel scatters ``w[cin, :, :, :]`` scaled by its value."""
    cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    full = np.zeros((cout, (h - 1) * stride + k, (wd - 1) * stride + k))
    for c in range(cin):
        for i in range(h):
            for j in range(wd):
                full[:, i * stride:i * stride + k, j * stride:j * stride + k] += x[c, i, j] * w[c]
    ho = (h - 1) * stride - 2 * padding + k
    wo = (wd - 1) * stride - 2 * padding + k
    return full[:, padding:padding + ho, padding:padding + wo] + b[:, None, None]


def direct_channel_squeeze(feat, w1, b1, w2, b2):
    pooled = feat.mean(axis=(1, 2))
    hidden = np.maximum(w1 @ pooled + b1, 0.0)
    return 1.0 / (1.0 + np.exp(-(w2 @ hidden + b2)))
