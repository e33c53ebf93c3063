"""Parameterised building blocks on top of :mod:`evikit.nn.tensor`."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Container that discovers parameters and child modules by attribute."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> list[Tensor]:
        # shared (tied) tensors are listed once
        seen, out = set(), []
        for _, p in self.named_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, path: str):
    if isinstance(value, Tensor) and value.requires_grad:
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")


KAIMING_A = float(np.sqrt(5.0))


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, a: float = KAIMING_A) -> np.ndarray:
    """He-uniform with leaky slope ``a``: bound ``sqrt(6 / ((1 + a^2) * fan_in))``.

    The default ``a = sqrt(5)`` gives bound ``1 / sqrt(fan_in)``, small enough
    that a hidden state fed back through ``concat(x, h)`` does not grow per step.
    """
    bound = np.sqrt(6.0 / ((1.0 + a * a) * fan_in))
    return rng.uniform(-bound, bound, size=shape)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def activation(name: str):
    if name == "relu":
        return T.relu
    if name == "leaky_relu":
        return T.leaky_relu
    raise ValueError(f"unknown activation {name!r}")


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1,
                 padding: int | None = None, *, rng: np.random.Generator):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = param(kaiming_uniform(rng, (cout, cin, kernel, kernel), cin * kernel * kernel))
        self.bias = param(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    """Stride-2 upsampling (kernel 4, padding 1 doubles H and W)."""

    def __init__(self, cin: int, cout: int, kernel: int = 4, stride: int = 2, padding: int = 1,
                 *, rng: np.random.Generator):
        self.stride = stride
        self.padding = padding
        fan_in = cin * kernel * kernel // (stride * stride)
        self.weight = param(kaiming_uniform(rng, (cin, cout, kernel, kernel), fan_in))
        self.bias = param(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class Dense(Module):
    def __init__(self, cin: int, cout: int, *, rng: np.random.Generator):
        self.weight = param(kaiming_uniform(rng, (cout, cin), cin))
        self.bias = param(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class ResidualBlock(Module):
    """``x + scale * conv(act(conv(x)))``; ``scale < 1`` keeps deep recurrent unrolls bounded."""

    def __init__(self, channels: int, act: str = "leaky_relu", scale: float = 1.0,
                 *, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng)
        self.act = act
        self.scale = scale

    def forward(self, x: Tensor) -> Tensor:
        branch = self.conv2(activation(self.act)(self.conv1(x)))
        return x + (branch if self.scale == 1.0 else branch * self.scale)


class ChannelSqueeze(Module):
    """Squeeze-excitation channel weights: pool -> dense -> relu -> dense -> sigmoid."""

    def __init__(self, channels: int, reduction: int = 4, *, rng: np.random.Generator):
        if channels % reduction:
            raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
        hidden = channels // reduction
        self.fc1 = Dense(channels, hidden, rng=rng)
        self.fc2 = Dense(hidden, channels, rng=rng)

    def forward(self, feat: Tensor) -> Tensor:
        z = T.relu(self.fc1(T.global_avg_pool(feat)))
        return T.sigmoid(self.fc2(z))


def scale_channels(feat: Tensor, weights: Tensor) -> Tensor:
    return feat * T.reshape(weights, (weights.shape[0], 1, 1))


class EGACA(Module):
    """Event-guided channel attention.

    Two squeeze blocks read the event features; one gates the event features
    themselves, the other gates the image features.  A two-layer 1x1
    feed-forward net fuses the gated pair back to ``C`` channels.
    """

    def __init__(self, channels: int, reduction: int = 4, shared: bool = False,
                 act: str = "leaky_relu", *, rng: np.random.Generator):
        self.cs_self = ChannelSqueeze(channels, reduction, rng=rng)
        self.cs_cross = self.cs_self if shared else ChannelSqueeze(channels, reduction, rng=rng)
        self.ffn1 = Conv2d(2 * channels, channels, 1, rng=rng)
        self.ffn2 = Conv2d(channels, channels, 1, rng=rng)
        self.act = act

    def weights(self, event_feat: Tensor) -> tuple[Tensor, Tensor]:
        return self.cs_self(event_feat), self.cs_cross(event_feat)

    def forward(self, event_feat: Tensor, image_feat: Tensor) -> Tensor:
        if event_feat.shape != image_feat.shape:
            raise ValueError(
                f"EGACA: event features {event_feat.shape} vs image features {image_feat.shape}"
            )
        w_self, w_cross = self.weights(event_feat)
        gated = T.concat([scale_channels(event_feat, w_self), scale_channels(image_feat, w_cross)])
        return self.ffn2(activation(self.act)(self.ffn1(gated)))


class EVRBlock(Module):
    """Recurrent residual block carrying a hidden state across iterations.

    ``concat(x, h_prev)`` -> channel-reducing conv -> residual blocks gives the
    block's output features; a further conv + activation gives the new state.
    """

    def __init__(self, cin: int, channels: int, n_res: int = 2, act: str = "leaky_relu",
                 res_scale: float = 1.0, *, rng: np.random.Generator):
        self.channels = channels
        self.reduce = Conv2d(cin + channels, channels, 3, rng=rng)
        self.res = [ResidualBlock(channels, act, res_scale, rng=rng) for _ in range(n_res)]
        self.state = Conv2d(channels, channels, 3, rng=rng)
        self.act = act

    def forward(self, x: Tensor, h_prev: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1:] != h_prev.shape[1:] or h_prev.shape[0] != self.channels:
            raise ValueError(f"EVR: input {x.shape} and state {h_prev.shape} are not aligned")
        z = self.reduce(T.concat([x, h_prev]))
        for block in self.res:
            z = block(z)
        h_new = activation(self.act)(self.state(z))
        return z, h_new
