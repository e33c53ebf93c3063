"""Numbered acceptance criteria, each at its stated tolerance and time budget.

Every test carries ``@pytest.mark.criterion(n)``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import math
import time
from collections import Counter

import numpy as np
import pytest

from conftest import bar_blur_scene, bar_skip_scene
from evikit.events import (
    EventStream,
    concatenate,
    read_events,
    reverse,
    slice_events,
    write_events,
)
from evikit.nn import tensor as T
from evikit.nn.checkpoint import decode_weights, encode_weights
from evikit.nn.gradcheck import check_gradients
from evikit.nn.layers import EGACA, EVRBlock
from evikit.nn.refid import Refid, RefidConfig, RefidInputs
from evikit.nn.tensor import Tensor
from evikit.nn.train import Sample, evaluate, toy_scene, train_toy
from evikit.nn.refid import prepare_inputs
from evikit.physical import blurry_interpolate, edi_deblur, interpolate_latent
from evikit.quality import psnr
from evikit.selfcheck import run_all
from evikit.simulator import FrameSequence, SimConfig, simulate
from evikit.voxel import VoxelGrid, read_voxel, voxelize, write_voxel
from oracles import dense_events, stream_by_pixel

EPS = np.finfo(float).eps


def within(budget: float, start: float) -> float:
    elapsed = time.perf_counter() - start
    assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
    return elapsed


# -- 1 -----------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_simulator_matches_dense_oracle(record_property):
    start = time.perf_counter()
    c = 0.2
    worst_dt, events = 0.0, 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        frames = rng.random((20, 8, 8))
        times = np.arange(20) / 20.0
        stream = simulate(FrameSequence(frames, times), SimConfig(c_mean=c))
        got = stream_by_pixel(stream)
        for key, (ts, ps) in dense_events(frames, times, c, substeps=10_000).items():
            lib = got.get(key, [])
            assert len(lib) == len(ts), f"seed {seed} pixel {key}: {len(lib)} vs {len(ts)} events"
            assert [p for _, p in lib] == ps.tolist()
            if len(ts):
                worst_dt = max(worst_dt, float(np.max(np.abs(np.array([t for t, _ in lib]) - ts))))
        events += len(stream)
    assert worst_dt <= 1e-6
    elapsed = within(10.0, start)
    record_property("detail", f"{events} events, max |dt| {worst_dt:.1e}s, {elapsed:.1f}s")


# -- 2 -----------------------------------------------------------------------------


@pytest.mark.criterion(2)
def test_quantization_bound_both_directions(record_property):
    start = time.perf_counter()
    c, log_eps = 0.2, 1e-3
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        frames = rng.uniform(0.0, 1.0, (2, 16, 16))
        s = simulate(FrameSequence(frames, [0.0, 1.0]), SimConfig(c_mean=c, log_eps=log_eps))
        # events quantise log(I + eps), so the reconstruction lives in that domain
        lit = frames + log_eps
        fwd = interpolate_latent(lit[0], s, 0.0, 1.0, c)
        bwd = interpolate_latent(lit[1], s, 1.0, 0.0, c)
        err = max(np.abs(np.log(fwd) - np.log(lit[1])).max(),
                  np.abs(np.log(bwd) - np.log(lit[0])).max())
        worst = max(worst, float(err))
        assert err <= c, f"seed {seed}: |dlog| {err}"
    elapsed = within(5.0, start)
    record_property("detail", f"max |dlog| {worst:.4f} <= {c}, {elapsed:.1f}s")


# -- 3 -----------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_edi_moving_bar_gain(record_property):
    start = time.perf_counter()
    frames, blurry, stream = bar_blur_scene(size=64, frames_per_blur=11, c=0.2)
    middle = frames[5]
    restored = edi_deblur(blurry, stream, 0.2)
    p_deblur, p_blur = psnr(restored, middle), psnr(blurry.image, middle)
    assert p_deblur >= p_blur + 5.0
    elapsed = within(5.0, start)
    record_property("detail", f"deblurred {p_deblur:.2f} dB vs blurry {p_blur:.2f} dB, {elapsed:.1f}s")


# -- 4 -----------------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_blurry_interpolation_beats_inputs(record_property):
    start = time.perf_counter()
    blur, stream = bar_skip_scene(size=64, frames_per_blur=11, skip=1, c=0.2)
    left, right = blur.blurry
    target, tau = blur.ground_truth[0][0], blur.gt_times[0][0]
    out = blurry_interpolate(left, right, stream, 0.2, tau)
    p_out = psnr(out, target)
    # the held-out frame is equidistant from both exposures: beat each of them
    p_in = max(psnr(left.image, target), psnr(right.image, target))
    assert p_out > p_in
    elapsed = within(5.0, start)
    record_property("detail", f"interpolated {p_out:.2f} dB vs best input {p_in:.2f} dB, {elapsed:.1f}s")


# -- 5 -----------------------------------------------------------------------------


def draw_stream(rng: np.random.Generator, max_events: int = 80) -> EventStream:
    width, height = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    t0 = float(rng.uniform(-100, 100))
    t1 = t0 + float(rng.choice([rng.uniform(1e-3, 1.0), rng.uniform(1.0, 50.0)]))
    n = int(rng.integers(0, max_events + 1))
    t = rng.uniform(t0, t1, n)
    if n and rng.random() < 0.5:
        # ties and events exactly on the window ends
        t[rng.integers(0, n, max(1, n // 3))] = rng.choice([t0, t1, t[0]])
    return EventStream(rng.integers(0, width, n), rng.integers(0, height, n), t,
                       rng.choice(np.array([-1, 1]), n), (t0, t1), width, height)


def as_multiset(s: EventStream) -> Counter:
    return Counter(zip(s.x.tolist(), s.y.tolist(), s.t.tolist(), s.p.tolist()))


CASES = 1000


@pytest.mark.criterion(5)
def test_property_suites(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(20240501)
    counts = Counter()

    for _ in range(CASES):  # reversal is an involution
        s = draw_stream(rng)
        twice = reverse(reverse(s))
        assert twice.window == s.window and twice.shape == s.shape
        assert np.array_equal(twice.x, s.x) and np.array_equal(twice.y, s.y)
        assert np.array_equal(twice.p, s.p)
        scale = max(abs(s.t_begin), abs(s.t_end))
        assert np.all(np.abs(twice.t - s.t) <= 8 * EPS * scale)
        counts["involution"] += 1

    for _ in range(CASES):  # (a, b] + (b, c] == (a, c]
        s = draw_stream(rng)
        a, b, c = np.sort(rng.uniform(s.t_begin, s.t_end, 3))
        if rng.random() < 0.3 and len(s):  # cut exactly on an event time
            b = float(np.clip(s.t[rng.integers(len(s))], a, c))
        left, right, whole = slice_events(s, a, b), slice_events(s, b, c), slice_events(s, a, c)
        assert as_multiset(left) + as_multiset(right) == as_multiset(whole)
        assert concatenate([left, right], window=(a, c)).equals(whole)
        counts["partition"] += 1

    for _ in range(CASES):  # voxel mass equals polarity sum
        s = draw_stream(rng)
        n = int(rng.integers(0, 10))
        g = voxelize(s, n)
        expect = np.zeros(s.shape)
        np.add.at(expect, (s.y, s.x), s.p)
        np.testing.assert_allclose(g.data.sum(axis=0), expect, atol=1e-9 * max(1, len(s)))
        counts["mass"] += 1

    for _ in range(CASES):  # shifting all times leaves the grid unchanged
        s = draw_stream(rng)
        n = int(rng.integers(0, 10))
        delta = float(rng.uniform(-1e3, 1e3))
        shifted = EventStream(s.x, s.y, s.t + delta, s.p, (s.t_begin + delta, s.t_end + delta),
                              s.width, s.height, sort=False)
        # bin positions are (t - t0) / span * (n + 1); each shifted time carries
        # a rounding error of order eps * |t + delta|
        span = s.t_end - s.t_begin
        reach = abs(s.t_begin) + abs(delta) + span
        tol = 1e-12 + 8 * EPS * reach / span * (n + 1) * max(1, len(s))
        np.testing.assert_allclose(voxelize(shifted, n).data, voxelize(s, n).data, atol=tol)
        counts["shift"] += 1

    assert all(counts[k] == CASES for k in ("involution", "partition", "mass", "shift"))
    elapsed = within(30.0, start)
    record_property("detail", f"4 x {CASES} cases, 0 failures, {elapsed:.1f}s")


# -- 6 -----------------------------------------------------------------------------

GRAD_TOL = 1e-4


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def op_checks(rng):
    """``(name, build, tensors)`` for every differentiable tensor op."""
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(3, 4)))
    row = leaf(rng.normal(size=(4,)))
    img = leaf(rng.normal(size=(2, 5, 5)))
    vec = leaf(rng.normal(size=5))
    w_lin, b_lin = leaf(rng.normal(size=(3, 5))), leaf(rng.normal(size=3))
    w_conv, b_conv = leaf(rng.normal(size=(3, 2, 3, 3))), leaf(rng.normal(size=3))
    w_up, b_up = leaf(rng.normal(size=(2, 3, 4, 4))), leaf(rng.normal(size=3))
    target = rng.normal(size=(3, 4))
    wsum = rng.normal(size=(3, 4))

    def weighted(t):
        return T.sum_all(t * rng_weights(t.shape))

    cache = {}

    def rng_weights(shape):
        if shape not in cache:
            cache[shape] = rng.normal(size=shape)
        return cache[shape]

    return [
        ("add", lambda: weighted(a + row), [a, row]),
        ("sub", lambda: weighted(a - b), [a, b]),
        ("mul", lambda: weighted(a * b), [a, b]),
        ("relu", lambda: weighted(T.relu(a)), [a]),
        ("leaky_relu", lambda: weighted(T.leaky_relu(a)), [a]),
        ("sigmoid", lambda: weighted(T.sigmoid(a)), [a]),
        ("reshape", lambda: weighted(T.reshape(a, (4, 3))), [a]),
        ("concat", lambda: weighted(T.concat([a, b], axis=1)), [a, b]),
        ("narrow", lambda: weighted(T.narrow(a, 1, 3, axis=1)), [a]),
        ("sum_all", lambda: T.sum_all(a * wsum), [a]),
        ("mean_all", lambda: T.mean_all(a * a), [a]),
        ("global_avg_pool", lambda: weighted(T.global_avg_pool(img * img)), [img]),
        ("linear", lambda: weighted(T.linear(vec, w_lin, b_lin)), [vec, w_lin, b_lin]),
        ("charbonnier", lambda: T.charbonnier(a, target), [a]),
        ("conv2d", lambda: weighted(T.conv2d(img, w_conv, b_conv, 2, 1)), [img, w_conv, b_conv]),
        ("conv_transpose2d", lambda: weighted(T.conv_transpose2d(img, w_up, b_up, 2, 1)),
         [img, w_up, b_up]),
    ]


def perturb(module, rng, scale=0.1):
    # zero-initialised biases would hide their gradient paths
    for p in module.parameters():
        p.data = p.data + scale * rng.normal(size=p.shape)


def egaca_check(rng):
    att = EGACA(4, 2, rng=rng)
    perturb(att, rng)
    ev, im = leaf(rng.normal(size=(4, 3, 3))), leaf(rng.normal(size=(4, 3, 3)))
    w = rng.normal(size=(4, 3, 3))
    return lambda: T.sum_all(att(ev, im) * w), [ev, im] + att.parameters()


def evr_check(rng):
    evr = EVRBlock(2, 4, n_res=1, rng=rng)
    perturb(evr, rng)
    x, h = leaf(rng.normal(size=(2, 4, 4))), leaf(rng.normal(size=(4, 4, 4)))
    w1, w2 = rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 4, 4))

    def build():
        out, h_new = evr(x, h)
        return T.sum_all(out * w1) + T.sum_all(h_new * w2)

    return build, [x, h] + evr.parameters()


def refid_check(rng, seed):
    # n = 0 gives two recurrent iterations: a 2-step unroll
    cfg = RefidConfig(scales=2, base_channels=4, n_interp=0, residual_blocks_per_evr=1,
                      image_residual_blocks=1, reduction=2)
    model = Refid(cfg, seed=seed)
    perturb(model, rng)
    hw = 4
    shapes = [(1, hw, hw), (1, hw, hw), (6, hw, hw), (6, hw, hw), (2, hw, hw), (2, hw, hw)]
    arrays = [rng.uniform(0, 1, s) if k < 2 else rng.normal(size=s) for k, s in enumerate(shapes)]
    inp = RefidInputs(*arrays)
    target = rng.uniform(0, 1, (2, 1, hw, hw))

    def build():
        out = model(inp)
        return T.charbonnier(T.concat([T.reshape(o, (1,) + o.shape) for o in out]), target)

    return build, model.parameters()


@pytest.mark.criterion(6)
def test_gradient_checks(record_property):
    start = time.perf_counter()
    worst = Counter()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        for name, build, tensors in op_checks(rng):
            err = check_gradients(build, tensors, seed=seed).max_error
            worst[name] = max(worst[name], err)
        build, tensors = egaca_check(rng)
        worst["EGACA"] = max(worst["EGACA"], check_gradients(build, tensors, seed=seed).max_error)
        build, tensors = evr_check(rng)
        worst["EVR"] = max(worst["EVR"], check_gradients(build, tensors, seed=seed).max_error)
        build, tensors = refid_check(rng, seed)
        report = check_gradients(build, tensors, max_entries=2, seed=seed)
        worst["REFID"] = max(worst["REFID"], report.max_error)
    bad = {k: v for k, v in worst.items() if not v < GRAD_TOL}
    assert not bad, f"relative error >= {GRAD_TOL}: {bad}"
    elapsed = within(60.0, start)
    record_property("detail", f"{len(worst)} graphs x 10 seeds, max rel err "
                              f"{max(worst.values()):.1e}, {elapsed:.1f}s")


# -- 7 -----------------------------------------------------------------------------


@pytest.mark.criterion(7)
@pytest.mark.slow
def test_toy_overfit(record_property):
    start = time.perf_counter()
    n = 3
    left, right, stream, targets = toy_scene(16, n, seed=0)
    sample = Sample(prepare_inputs(left, right, stream, n), targets)
    cfg = RefidConfig(scales=2, base_channels=8, n_interp=n)
    result = train_toy([sample], cfg, steps=500, lr=1e-3, seed=0)
    initial, final = result.losses[0], evaluate(result.model, sample)
    assert math.isfinite(final) and final <= 0.1 * initial

    preds = result.model.predict(sample.inputs)
    p_out = float(np.mean([psnr(p, t) for p, t in zip(preds, targets)]))
    # the blurry baseline gets the better of the two inputs for each target
    p_in = float(np.mean([max(psnr(left.image, t), psnr(right.image, t)) for t in targets]))
    assert p_out > p_in
    elapsed = within(600.0, start)
    record_property("detail", f"loss {initial:.4f} -> {final:.4f} ({final / initial:.3f}x), "
                              f"PSNR {p_out:.2f} vs blurry {p_in:.2f} dB, {elapsed:.0f}s")


# -- 8 -----------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_metric_golden_vectors(record_property):
    from evikit.quality import charbonnier, ssim

    a = np.zeros((8, 8))
    assert abs(psnr(a, a + 1.0, peak=255.0) - 48.1308) <= 1e-3
    img = np.random.default_rng(0).random((16, 16))
    assert abs(ssim(img, img) - 1.0) <= 1e-9
    assert charbonnier(img, img) == 1e-6
    embedded = {name: ok for name, ok, _ in run_all()}
    for name in ("psnr peak 255, mse 1", "ssim identical", "charbonnier identical"):
        assert embedded[name], name
    record_property("detail", "psnr 48.1308 dB, ssim 1, charbonnier 1e-6; embedded in selfcheck")


# -- 9 -----------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_format_roundtrips(tmp_path, record_property):
    rng = np.random.default_rng(99)
    for k in range(100):
        s = draw_stream(rng, max_events=int(rng.choice([0, 10, 500])))
        first, second = tmp_path / f"e{k}a.evt1", tmp_path / f"e{k}b.evt1"
        write_events(s, first)
        write_events(read_events(first), second)
        assert first.read_bytes() == second.read_bytes()

        bins, h, w = int(rng.integers(2, 10)), int(rng.integers(1, 12)), int(rng.integers(1, 12))
        t0 = float(rng.uniform(-10, 10))
        g = VoxelGrid(rng.normal(size=(bins, h, w)) * 10 ** rng.uniform(-3, 3),
                      (t0, t0 + float(rng.uniform(1e-3, 5))))
        first, second = tmp_path / f"g{k}a.vox", tmp_path / f"g{k}b.vox"
        write_voxel(g, first)
        write_voxel(read_voxel(first), second)
        assert first.read_bytes() == second.read_bytes()

        arrays = {f"layer{j}.{rng.choice(['weight', 'bias'])}":
                  rng.normal(size=tuple(rng.integers(1, 5, int(rng.integers(0, 5)))))
                  for j in range(int(rng.integers(0, 8)))}
        config = {"seed": int(rng.integers(1000)), "scales": int(rng.integers(1, 4)),
                  "name": f"run-{k}", "shared": bool(rng.random() < 0.5)}
        first = encode_weights(config, arrays)
        (tmp_path / f"w{k}a.rwt1").write_bytes(first)
        cfg, back = decode_weights((tmp_path / f"w{k}a.rwt1").read_bytes())
        second = encode_weights(cfg, back)
        (tmp_path / f"w{k}b.rwt1").write_bytes(second)
        assert first == second
    record_property("detail", "EVT1, VOX1, RWT1: 100 randomized cases each, byte-identical")
