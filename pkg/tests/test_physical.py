import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import bar_blur_scene, bar_skip_scene, random_stream
from evikit.events import EventStream
from evikit.physical import (
    ExposedFrame,
    blurry_interpolate,
    edi_deblur,
    edi_denominator,
    fuse_latent,
    fusion_weights,
    interpolate_latent,
)
from evikit.quality import exposure_mean, psnr
from evikit.simulator import FrameSequence, SimConfig, simulate
from oracles import quadrature_edi

EPS = 1e-3


def test_exposed_frame_validation():
    with pytest.raises(ValueError, match="exceed"):
        ExposedFrame(np.zeros((2, 2)), 1.0, 1.0)
    with pytest.raises(ValueError, match="non-negative"):
        ExposedFrame(np.full((2, 2), -0.1), 0.0, 1.0)
    f = ExposedFrame(np.zeros((3, 4)), 0.2, 0.6)
    assert f.exposure == pytest.approx(0.4) and f.midpoint == pytest.approx(0.4)
    assert f.shape == (3, 4)


# -- latent interpolation ---------------------------------------------------------


def test_no_events_identity():
    img = np.random.default_rng(0).random((4, 5))
    s = EventStream.empty((0.0, 1.0), 5, 4)
    assert np.array_equal(interpolate_latent(img, s, 0.1, 0.9, 0.2), img)
    assert np.array_equal(interpolate_latent(img, s, 0.9, 0.1, 0.2), img)
    assert np.array_equal(interpolate_latent(img, s, 0.5, 0.5, 0.2), img)


def test_single_event_scales_by_exp_c():
    s = EventStream.from_events([(1, 0, 0.5, 1)], (0.0, 1.0), 2, 1)
    out = interpolate_latent(np.ones((1, 2)), s, 0.0, 1.0, 0.2)
    assert out[0, 1] == pytest.approx(1.221402758, abs=1e-9)
    assert out[0, 0] == 1.0
    back = interpolate_latent(np.ones((1, 2)), s, 1.0, 0.0, 0.2)
    assert back[0, 1] == pytest.approx(math.exp(-0.2), rel=1e-15)


def test_interpolate_latent_range_errors():
    s = EventStream.empty((0.0, 1.0), 2, 2)
    with pytest.raises(IndexError):
        interpolate_latent(np.ones((2, 2)), s, 0.0, 1.5, 0.2)
    with pytest.raises(ValueError):
        interpolate_latent(np.ones((2, 2)), s, 0.0, 0.5, 0.0)
    with pytest.raises(ValueError):
        interpolate_latent(np.ones((3, 2)), s, 0.0, 0.5, 0.2)


def _quantization_case(seed, c=0.2):
    rng = np.random.default_rng(seed)
    frames = rng.uniform(0.05, 1.0, (2, 12, 12))
    seq = FrameSequence(frames, [0.0, 1.0])
    return frames, simulate(seq, SimConfig(c_mean=c))


@pytest.mark.parametrize("seed", range(5))
def test_quantization_bound_both_directions(seed):
    c = 0.2
    frames, s = _quantization_case(seed, c)
    # the simulator quantises log(I + eps); reconstruct in that domain
    fwd = interpolate_latent(frames[0] + EPS, s, 0.0, 1.0, c)
    bwd = interpolate_latent(frames[1] + EPS, s, 1.0, 0.0, c)
    assert np.all(np.abs(np.log(fwd) - np.log(frames[1] + EPS)) <= c)
    assert np.all(np.abs(np.log(bwd) - np.log(frames[0] + EPS)) <= c)


@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_composition_through_intermediate_time(seed, a, b, r):
    s = random_stream(np.random.default_rng(seed), 200)
    img = np.random.default_rng(seed + 1).random(s.shape)
    mid = interpolate_latent(img, s, r, a, 0.2)
    two_step = interpolate_latent(mid, s, a, b, 0.2)
    direct = interpolate_latent(img, s, r, b, 0.2)
    np.testing.assert_allclose(two_step, direct, rtol=1e-12)


def test_color_frames_share_events():
    s = EventStream.from_events([(0, 0, 0.5, 1)], (0.0, 1.0), 1, 1)
    rgb = np.array([[[0.2, 0.4, 0.6]]])
    out = interpolate_latent(rgb, s, 0.0, 1.0, 0.2)
    np.testing.assert_allclose(out[0, 0], rgb[0, 0] * math.exp(0.2))


# -- EDI ---------------------------------------------------------------------------


def test_edi_no_events_returns_blurry():
    b = ExposedFrame(np.random.default_rng(0).random((5, 5)), 0.0, 1.0)
    s = EventStream.empty((0.0, 1.0), 5, 5)
    assert np.array_equal(edi_deblur(b, s, 0.2), b.image)
    den, has = edi_denominator(s, 0.0, 1.0, 0.5, 0.2)
    assert np.all(den == 1.0) and not has.any()


def test_edi_static_scene_is_fixed_point():
    frames = np.repeat(np.random.default_rng(1).random((1, 6, 6)), 11, axis=0)
    times = np.arange(11.0)
    s = simulate(FrameSequence(frames, times))
    b = ExposedFrame(exposure_mean(frames), 0.0, 10.0)
    assert len(s) == 0
    np.testing.assert_array_equal(edi_deblur(b, s, 0.2), frames[0])


def test_edi_single_event_closed_form():
    # one +1 event at t=0.75 in exposure [0, 1], target 0.5:
    # D = 0.75 * 1 + 0.25 * e^c
    c = 0.3
    s = EventStream.from_events([(0, 0, 0.75, 1)], (0.0, 1.0), 1, 1)
    b = ExposedFrame(np.array([[0.5]]), 0.0, 1.0)
    expect = 0.5 / (0.75 + 0.25 * math.exp(c))
    assert edi_deblur(b, s, c)[0, 0] == pytest.approx(expect, rel=1e-14)
    # target after the event: S = -1 before it
    expect_late = 0.5 / (0.75 * math.exp(-c) + 0.25)
    assert edi_deblur(b, s, c, t_target=0.9)[0, 0] == pytest.approx(expect_late, rel=1e-14)


def test_edi_matches_quadrature_oracle():
    rng = np.random.default_rng(3)
    s = random_stream(rng, 300, 5, 4, window=(0.0, 2.0))
    img = rng.random((4, 5))
    for t_s, t_e, tgt in [(0.0, 2.0, 1.0), (0.3, 1.7, 0.3), (0.5, 1.5, 1.41)]:
        fast = edi_deblur(ExposedFrame(img, t_s, t_e), s, 0.2, tgt)
        slow = quadrature_edi(img, list(s), t_s, t_e, tgt, 0.2)
        np.testing.assert_allclose(fast, slow, rtol=2e-4)


@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_edi_denominator_positive_and_finite(seed, c):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, int(rng.integers(0, 400)))
    tgt = float(rng.uniform(0, 1))
    den, _ = edi_denominator(s, 0.0, 1.0, tgt, c)
    assert np.all(den > 0) and np.all(np.isfinite(den))
    out = edi_deblur(ExposedFrame(rng.random(s.shape), 0.0, 1.0), s, c, tgt)
    assert np.all(np.isfinite(out))


def test_edi_errors():
    s = EventStream.empty((0.0, 1.0), 2, 2)
    b = ExposedFrame(np.ones((2, 2)), 0.0, 1.0)
    with pytest.raises(ValueError):
        edi_deblur(b, s, 0.2, t_target=1.5)
    with pytest.raises(IndexError):
        edi_deblur(ExposedFrame(np.ones((2, 2)), 0.0, 2.0), s, 0.2)
    with pytest.raises(ValueError):
        edi_deblur(b, s, -0.2)


def test_edi_moving_bar_gain():
    frames, blurry, stream = bar_blur_scene()
    middle = frames[5]
    gain = psnr(edi_deblur(blurry, stream, 0.2), middle) - psnr(blurry.image, middle)
    assert gain >= 5.0


def test_edi_inside_exposure_targets():
    frames, blurry, stream = bar_blur_scene()
    for k in (2, 8):
        restored = edi_deblur(blurry, stream, 0.2, t_target=float(k))
        assert psnr(restored, frames[k]) > psnr(blurry.image, frames[k]) + 5


def test_edi_is_partition_independent():
    frames, blurry, stream = bar_blur_scene(size=32)
    whole = edi_deblur(blurry, stream, 0.2)
    rows = [edi_deblur(ExposedFrame(blurry.image[r:r + 8], blurry.t_s, blurry.t_e),
                       _rows(stream, r, r + 8), 0.2) for r in range(0, 32, 8)]
    np.testing.assert_array_equal(np.vstack(rows), whole)


def _rows(stream, lo, hi):
    keep = (stream.y >= lo) & (stream.y < hi)
    return EventStream(stream.x[keep], stream.y[keep] - lo, stream.t[keep], stream.p[keep],
                       stream.window, stream.width, hi - lo)


# -- fusion -------------------------------------------------------------------------


@given(st.floats(-10, 10), st.floats(1e-3, 10), st.floats(-20, 20))
def test_fusion_weights_properties(t0, span, tau):
    w0, w1 = fusion_weights(t0, t0 + span, tau)
    assert 0 <= w0 <= 1 and 0 <= w1 <= 1
    assert w0 + w1 == 1.0


def test_fusion_weights_examples():
    assert fusion_weights(0.0, 1.0, 0.5) == (0.5, 0.5)
    assert fusion_weights(0.0, 1.0, 0.0) == (1.0, 0.0)
    assert fusion_weights(0.0, 1.0, 1.0) == (0.0, 1.0)
    with pytest.raises(ValueError):
        fusion_weights(1.0, 1.0, 1.0)


def test_blurry_interpolate_static_returns_left():
    img = np.random.default_rng(0).random((6, 6))
    s = EventStream.empty((0.0, 3.0), 6, 6)
    left, right = ExposedFrame(img, 0.0, 1.0), ExposedFrame(img * 0.5, 2.0, 3.0)
    assert np.array_equal(blurry_interpolate(left, right, s, 0.2, 0.5), img)
    mid = blurry_interpolate(left, right, s, 0.2, 1.5)
    np.testing.assert_allclose(mid, 0.75 * img)


def test_blurry_interpolate_skip1_beats_inputs():
    blur, stream = bar_skip_scene()
    left, right = blur.blurry
    target, tau = blur.ground_truth[0][0], blur.gt_times[0][0]
    out = blurry_interpolate(left, right, stream, 0.2, tau)
    score = psnr(out, target)
    assert score > psnr(left.image, target)
    assert score > psnr(right.image, target)


def test_blurry_interpolate_range():
    s = EventStream.empty((0.0, 3.0), 2, 2)
    left, right = ExposedFrame(np.ones((2, 2)), 0.0, 1.0), ExposedFrame(np.ones((2, 2)), 2.0, 3.0)
    with pytest.raises(ValueError, match="outside"):
        blurry_interpolate(left, right, s, 0.2, 3.5)


def test_fuse_latent_endpoints():
    rng = np.random.default_rng(2)
    s = random_stream(rng, 100, 4, 4)
    a, b = rng.random((4, 4)), rng.random((4, 4))
    np.testing.assert_array_equal(fuse_latent(a, 0.2, b, 0.8, s, 0.2, 0.2), a)
    np.testing.assert_array_equal(fuse_latent(a, 0.2, b, 0.8, s, 0.2, 0.8), b)
