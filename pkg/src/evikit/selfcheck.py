"""Embedded golden vectors, runnable without any test framework.

Each check returns ``(name, ok, detail)``; :func:`run_all` collects them.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .events import EventStream, decode_events, encode_events, polarity_sum, reverse, slice_events
from .nn import tensor as T
from .nn.layers import EGACA, ChannelSqueeze
from .physical import ExposedFrame, edi_deblur, fusion_weights, interpolate_latent
from .quality import charbonnier, psnr, ssim
from .voxel import decode_voxel, encode_voxel, subvoxel, voxelize

CheckResult = tuple[str, bool, str]


def _psnr_golden() -> CheckResult:
    a = np.zeros((8, 8))
    b = np.ones((8, 8))  # MSE 1 on a 0..255 scale
    v = psnr(a, b, peak=255.0)
    return "psnr peak 255, mse 1", abs(v - 48.1308) <= 1e-3, f"{v:.6f} dB"


def _psnr_cap() -> CheckResult:
    a = np.linspace(0, 1, 64).reshape(8, 8)
    v = psnr(a, a)
    return "psnr identical", v == 99.0, f"{v} dB"


def _ssim_identical() -> CheckResult:
    a = np.random.default_rng(0).random((24, 24))
    v = ssim(a, a)
    return "ssim identical", abs(v - 1.0) <= 1e-9, f"{v!r}"


def _charbonnier_identical() -> CheckResult:
    a = np.random.default_rng(1).random((5, 5))
    v = charbonnier(a, a)
    return "charbonnier identical", v == 1e-6, f"{v!r}"


def _slice() -> CheckResult:
    s = EventStream.from_events([(0, 0, 0.1, 1), (0, 0, 0.2, 1), (0, 0, 0.3, -1)], (0.0, 1.0), 1, 1)
    got = slice_events(s, 0.1, 0.3).t.tolist()
    empty = slice_events(s, 0.5, 0.5)
    ok = got == [0.2, 0.3] and len(empty) == 0 and empty.window == (0.5, 0.5)
    return "slice (a, b]", ok, f"{got}"


def _reverse() -> CheckResult:
    s = EventStream.from_events([(3, 4, 0.2, 1)], (0.0, 1.0), 8, 8)
    (e,) = list(reverse(s))
    ok = (e.x, e.y, e.p) == (3, 4, -1) and abs(e.t - 0.8) < 1e-12
    return "reverse single event", ok, f"{tuple(e)}"


def _polarity_sum() -> CheckResult:
    s = EventStream.from_events([(1, 1, 0.1, 1), (1, 1, 0.2, 1), (1, 1, 0.3, -1)], (0.0, 1.0), 2, 2)
    v, z = polarity_sum(s, (1, 1), 0.0, 1.0), polarity_sum(s, (0, 0), 0.0, 1.0)
    return "polarity sum", v == 1 and z == 0, f"{v}, {z}"


def _evt1_magic() -> CheckResult:
    s = EventStream.empty((0.0, 1.0), 4, 4)
    buf = encode_events(s)
    same = decode_events(buf).equals(s) and encode_events(decode_events(buf)) == buf
    try:
        decode_events(b"XXXX" + buf[4:])
        bad = False
    except ValueError as exc:
        bad = getattr(exc, "offset", None) == 0
    return "evt1 empty round-trip, bad magic", same and bad, ""


def _latent_identity() -> CheckResult:
    img = np.full((4, 4), 0.3)
    s = EventStream.empty((0.0, 1.0), 4, 4)
    out = interpolate_latent(img, s, 0.0, 0.7, 0.2)
    blurry = edi_deblur(ExposedFrame(img, 0.2, 0.6), s, 0.2)
    return "no events -> identity", np.array_equal(out, img) and np.array_equal(blurry, img), ""


def _exp_step() -> CheckResult:
    s = EventStream.from_events([(0, 0, 0.5, 1)], (0.0, 1.0), 1, 1)
    v = float(interpolate_latent(np.ones((1, 1)), s, 0.0, 1.0, 0.2)[0, 0])
    return "one event -> exp(c)", abs(v - 1.221402758) < 1e-9, f"{v:.12f}"


def _fusion_midway() -> CheckResult:
    w0, w1 = fusion_weights(0.0, 1.0, 0.5)
    return "fusion weights midway", (w0, w1) == (0.5, 0.5), f"{w0}, {w1}"


def _voxel_bilinear() -> CheckResult:
    # n = 2: bin centres at 0, 1/3, 2/3, 1
    centre = voxelize(EventStream.from_events([(0, 0, 1 / 3, 1)], (0.0, 1.0), 1, 1), 2)
    mid = voxelize(EventStream.from_events([(0, 0, 0.5, 1)], (0.0, 1.0), 1, 1), 2)
    ok = (np.allclose(centre.data[:, 0, 0], [0, 1, 0, 0], atol=1e-12)
          and np.allclose(mid.data[:, 0, 0], [0, 0.5, 0.5, 0], atol=1e-12))
    pair = subvoxel(mid, 1).shape[0] == 2 and np.array_equal(subvoxel(mid, 3), mid.data[2:4])
    rt = encode_voxel(decode_voxel(encode_voxel(mid))) == encode_voxel(mid)
    return "voxel bilinear weights", ok and pair and rt, f"{mid.data[:, 0, 0].tolist()}"


def _identity_conv() -> CheckResult:
    x = np.random.default_rng(2).random((3, 5, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    with T.no_grad():
        y = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(np.zeros(3)), 1, 0).data
    return "identity 1x1 conv", np.array_equal(y, x), ""


def _squeeze_half() -> CheckResult:
    rng = np.random.default_rng(3)
    cs = ChannelSqueeze(8, 4, rng=rng)
    with T.no_grad():
        w = cs(T.Tensor(np.zeros((8, 4, 4)))).data
    att = EGACA(8, 4, rng=rng)
    with T.no_grad():
        ws, wc = att.weights(T.Tensor(np.zeros((8, 4, 4))))
    ok = np.all(w == 0.5) and np.all(ws.data == 0.5) and np.all(wc.data == 0.5)
    return "channel squeeze sigma(0)", bool(ok), ""


CHECKS: list[Callable[[], CheckResult]] = [
    _psnr_golden,
    _psnr_cap,
    _ssim_identical,
    _charbonnier_identical,
    _slice,
    _reverse,
    _polarity_sum,
    _evt1_magic,
    _latent_identity,
    _exp_step,
    _fusion_midway,
    _voxel_bilinear,
    _identity_conv,
    _squeeze_half,
]


def run_all() -> list[CheckResult]:
    out = []
    for check in CHECKS:
        try:
            out.append(check())
        except Exception as exc:  # a crash is a failed check, not a crashed selfcheck
            out.append((check.__name__.lstrip("_"), False, f"{type(exc).__name__}: {exc}"))
    return out


def passed(results: list[CheckResult]) -> bool:
    return all(ok for _, ok, _ in results)

