"""Closed-form event-based restoration.

* ``interpolate_latent`` scales a reference frame by ``exp(c * S)``, where ``S``
  is the signed polarity sum between the reference time and the query time.
* ``edi_deblur`` inverts the blur model ``B = (1/T) * integral of the latent
  frame over the exposure``.  Between two events at a pixel the integrand is
  constant, so the integral is an exact finite sum over inter-event segments.
* ``blurry_interpolate`` chains both from the two key frames and blends the
  two estimates with time-linear weights.

Color frames (``H x W x 3``) share the monochrome event stream per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream, polarity_image, slice_events


@dataclass(frozen=True)
class ExposedFrame:
    """An image captured over the exposure interval ``[t_s, t_e]``."""

    image: np.ndarray
    t_s: float
    t_e: float

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if not (img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 3)):
            raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")
        if not np.all(np.isfinite(img)) or img.min(initial=0) < 0:
            raise ValueError("image values must be finite and non-negative")
        if not self.t_e > self.t_s:
            raise ValueError(f"exposure end {self.t_e} must exceed start {self.t_s}")
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "t_s", float(self.t_s))
        object.__setattr__(self, "t_e", float(self.t_e))

    @property
    def exposure(self) -> float:
        return self.t_e - self.t_s

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_s + self.t_e)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]


def _per_channel(values: np.ndarray, image: np.ndarray) -> np.ndarray:
    return values[..., None] if image.ndim == 3 else values


def _check_geometry(image: np.ndarray, stream: EventStream) -> None:
    if image.shape[:2] != stream.shape:
        raise ValueError(f"image is {image.shape[:2]} but events are {stream.shape}")


def interpolate_latent(
    ref_image, stream: EventStream, t_ref: float, tau: float, c: float
) -> np.ndarray:
    """Latent frame at ``tau`` from a sharp frame at ``t_ref``."""
    if not c > 0:
        raise ValueError(f"contrast threshold must be > 0, got {c}")
    img = np.asarray(ref_image, dtype=np.float64)
    _check_geometry(img, stream)
    t_ref, tau = float(t_ref), float(tau)
    lo, hi = min(t_ref, tau), max(t_ref, tau)
    if lo < stream.t_begin or hi > stream.t_end:
        raise IndexError(
            f"span [{lo}, {hi}] not covered by stream window [{stream.t_begin}, {stream.t_end}]"
        )
    if tau == t_ref:
        return img.copy()
    acc = polarity_image(stream, lo, hi)
    if tau < t_ref:
        acc = -acc
    out = img * np.exp(c * _per_channel(acc, img))
    return np.maximum(out, 0.0)


def edi_denominator(
    stream: EventStream, t_s: float, t_e: float, t_target: float, c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``integral_{t_s}^{t_e} exp(c * S(t_target, t)) dt`` for every pixel.

    ``S(t_target, t)`` is the polarity sum over ``(t_target, t]`` for
    ``t > t_target`` and minus the sum over ``(t, t_target]`` otherwise.
    Returns ``(denominator, has_events)`` as ``H x W`` arrays.
    """
    h, w = stream.shape
    sub = slice_events(stream, t_s, t_e)
    length = t_e - t_s
    den = np.full(h * w, length)
    has = np.zeros(h * w, dtype=bool)
    if len(sub) == 0:
        return den.reshape(h, w), has.reshape(h, w)

    pix = sub.pixel_index()
    order = np.lexsort((np.arange(len(sub)), pix))  # by pixel, then time (stream is time-sorted)
    pix = pix[order]
    t = sub.t[order]
    p = sub.p[order].astype(np.int64)
    has[pix] = True

    start = np.ones(pix.size, dtype=bool)
    start[1:] = pix[1:] != pix[:-1]
    group = np.cumsum(start) - 1
    first_idx = np.flatnonzero(start)
    # cumulative polarity after each event, restarting per pixel
    csum = np.cumsum(p)
    cum = csum - np.repeat(csum[first_idx] - p[first_idx], np.diff(np.append(first_idx, pix.size)))
    # level of the cumulative sum at t_target (events with t <= t_target)
    upto = np.where(t <= t_target, p, 0)
    ref = np.bincount(group, weights=upto.astype(np.float64))
    ref_ev = ref[group]

    nxt = np.empty_like(t)
    nxt[:-1] = t[1:]
    last = np.ones(pix.size, dtype=bool)
    last[:-1] = pix[:-1] != pix[1:]
    nxt[last] = t_e

    seg = (nxt - t) * np.exp(c * (cum - ref_ev))
    total = np.bincount(group, weights=seg)
    lead = (t[first_idx] - t_s) * np.exp(-c * ref)
    upix = pix[first_idx]
    den[upix] = total + lead
    return den.reshape(h, w), has.reshape(h, w)


def edi_deblur(
    frame: ExposedFrame, stream: EventStream, c: float, t_target: float | None = None
) -> np.ndarray:
    """Sharp latent frame at ``t_target`` (exposure midpoint by default) from a blurry frame."""
    if not c > 0:
        raise ValueError(f"contrast threshold must be > 0, got {c}")
    _check_geometry(frame.image, stream)
    t_s, t_e = frame.t_s, frame.t_e
    if t_s < stream.t_begin or t_e > stream.t_end:
        raise IndexError(
            f"exposure [{t_s}, {t_e}] not covered by stream window "
            f"[{stream.t_begin}, {stream.t_end}]"
        )
    t_target = frame.midpoint if t_target is None else float(t_target)
    if not t_s <= t_target <= t_e:
        raise ValueError(f"target {t_target} outside exposure [{t_s}, {t_e}]")
    den, has = edi_denominator(stream, t_s, t_e, t_target, c)
    scale = _per_channel(np.where(has, frame.exposure / den, 1.0), frame.image)
    out = frame.image * scale
    return np.where(_per_channel(has, frame.image), out, frame.image)


def fusion_weights(t_left: float, t_right: float, tau: float) -> tuple[float, float]:
    """Time-linear weights ``(w_left, w_right)``, clamped to ``[0, 1]`` and summing to 1."""
    if not t_right > t_left:
        raise ValueError(f"right anchor {t_right} must follow left anchor {t_left}")
    w0 = (t_right - tau) / (t_right - t_left)
    w0 = min(1.0, max(0.0, w0))
    return w0, 1.0 - w0


def blurry_interpolate(
    left: ExposedFrame,
    right: ExposedFrame,
    stream: EventStream,
    c: float,
    tau: float,
    deblur: bool = True,
) -> np.ndarray:
    """Latent frame at ``tau`` between two (possibly blurry) key frames.

    Both key frames are restored at their exposure midpoints, carried to
    ``tau`` with the events in between and blended by temporal proximity.
    ``deblur=False`` treats the key frames as sharp captures at their midpoints.
    """
    if not left.t_s < right.t_e:
        raise ValueError("left frame must precede right frame")
    tau = float(tau)
    if not left.t_s <= tau <= right.t_e:
        raise ValueError(f"tau {tau} outside [{left.t_s}, {right.t_e}]")
    sharp0 = edi_deblur(left, stream, c) if deblur else left.image
    sharp1 = edi_deblur(right, stream, c) if deblur else right.image
    return fuse_latent(sharp0, left.midpoint, sharp1, right.midpoint, stream, c, tau)


def fuse_latent(
    img0, t0: float, img1, t1: float, stream: EventStream, c: float, tau: float
) -> np.ndarray:
    """Carry sharp frames at ``t0`` and ``t1`` to ``tau`` and blend them time-linearly."""
    est0 = interpolate_latent(img0, stream, t0, tau, c)
    est1 = interpolate_latent(img1, stream, t1, tau, c)
    w0, w1 = fusion_weights(t0, t1, tau)
    if w1 == 0.0:
        return est0
    if w0 == 0.0:
        return est1
    return w0 * est0 + w1 * est1
