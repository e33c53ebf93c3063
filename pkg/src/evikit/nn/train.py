"""Adam training loop and a synthetic toy sample generator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..physical import ExposedFrame
from ..quality import exposure_mean
from ..scenes import moving_bar
from ..simulator import FrameSequence, SimConfig, simulate
from . import tensor as T
from .refid import Refid, RefidConfig, RefidInputs, prepare_inputs


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became {loss} at step {step}")
        self.step = step
        self.loss = loss


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class Sample:
    inputs: RefidInputs
    targets: list[np.ndarray]  # n + 2 frames, H x W (or H x W x 3)


@dataclass
class TrainResult:
    model: Refid
    losses: list[float] = field(default_factory=list)


def _target_tensor(targets) -> np.ndarray:
    return np.stack([t[None] if t.ndim == 2 else np.moveaxis(t, -1, 0) for t in targets])


def sample_loss(model: Refid, sample: Sample, eps: float = 1e-6) -> T.Tensor:
    """Mean Charbonnier over all ``n + 2`` outputs, every output weighted equally."""
    outputs = model(sample.inputs)
    target = _target_tensor(sample.targets)
    if len(outputs) != target.shape[0]:
        raise ValueError(f"{len(outputs)} outputs but {target.shape[0]} targets")
    pred = T.concat([T.reshape(o, (1,) + o.shape) for o in outputs])
    return T.charbonnier(pred, target, eps)


def train_toy(dataset: list[Sample], cfg: RefidConfig, steps: int = 500, lr: float = 1e-3,
              seed: int = 0, model: Refid | None = None, log=None) -> TrainResult:
    """Fit a model with plain Adam; sample ``k`` is used at steps ``k, k + N, ...``."""
    if not dataset:
        raise ValueError("dataset is empty")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    model = model or Refid(cfg, seed=seed)
    opt = Adam(model.parameters(), lr=lr)
    result = TrainResult(model)
    for step in range(steps):
        sample = dataset[step % len(dataset)]
        opt.zero_grad()
        loss = sample_loss(model, sample)
        value = float(loss.data)
        if not np.isfinite(value):
            T.get_tape().clear()
            raise TrainingDiverged(step, value)
        loss.backward()
        opt.step()
        result.losses.append(value)
        if log is not None and (step % 50 == 0 or step == steps - 1):
            log(f"step {step:5d}  loss {value:.6f}")
    return result


def evaluate(model: Refid, sample: Sample) -> float:
    with T.no_grad():
        return float(sample_loss(model, sample).data)


def toy_scene(size: int = 16, n: int = 3, seed: int = 0, frames_per_blur: int = 5,
              skip: int = 3, c: float = 0.2):
    """Blurry moving-bar pair, its events and sharp frames at the ``n + 2`` bin centres.

    Time unit is one high-rate frame; the bar's speed, width and start are
    drawn from ``seed``.  Returns ``(left, right, stream, targets)``.
    """
    rng = np.random.default_rng(seed)
    speed = rng.uniform(0.5, 0.9) * (1 if rng.random() < 0.5 else -1)
    width = rng.uniform(3.0, 5.0)
    total = 2 * frames_per_blur + skip
    travel = speed * (total - 1)
    start = size / 2 - travel / 2 - width / 2

    def render(times):
        return moving_bar(size, size, times, speed=speed, bar_width=width, start=start)

    times = np.arange(total, dtype=np.float64)
    frames = render(times)
    stream = simulate(FrameSequence(frames, times), SimConfig(c_mean=c))
    lo, hi = frames_per_blur, frames_per_blur + skip
    left = ExposedFrame(exposure_mean(frames[:lo]), times[0], times[lo - 1])
    right = ExposedFrame(exposure_mean(frames[hi:]), times[hi], times[-1])
    targets = list(render(np.linspace(left.midpoint, right.midpoint, n + 2)))
    return left, right, stream, targets


def toy_sample(size: int = 16, n: int = 3, seed: int = 0, frames_per_blur: int = 5,
               skip: int = 3, c: float = 0.2, exposure_bins: int = 6) -> Sample:
    """:func:`toy_scene` packed as network inputs and targets."""
    left, right, stream, targets = toy_scene(size, n, seed, frames_per_blur, skip, c)
    return Sample(prepare_inputs(left, right, stream, n, exposure_bins), targets)
