"""Toy-scale recurrent event-based frame interpolation network.

Layout (U-Net shaped, ``scales`` levels, ``base_channels * 2**j`` channels at
level ``j``):

* image branch: ``concat(I0, E0, I1, E1)`` -> head conv -> residual blocks,
  strided convs between levels;
* event branch: a backward sweep over iterations ``i = n+1 .. 0`` caches the
  backward recurrent features at every level, then a forward sweep
  ``i = 0 .. n+1`` runs the forward recurrent blocks, mixes in the cached
  backward features with a 1x1 conv and fuses image features with EGACA; the
  fused map is downsampled to feed the next level;
* decoder: transposed convs with additive skips from the fused encoder maps,
  one output frame per iteration.

Output ``i`` is the latent frame at voxel-bin centre ``i``: the restored left
key frame (``i = 0``), ``n`` interpolated frames, the restored right key
frame (``i = n + 1``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..events import EventStream, slice_events
from ..physical import ExposedFrame
from ..voxel import VoxelGrid, bidirectional_pair, exposure_voxel
from . import tensor as T
from .layers import (
    EGACA,
    Conv2d,
    ConvTranspose2d,
    EVRBlock,
    Module,
    ResidualBlock,
    activation,
)
from .tensor import Tensor


@dataclass(frozen=True)
class RefidConfig:
    scales: int = 2
    base_channels: int = 8
    n_interp: int = 3
    residual_blocks_per_evr: int = 2
    image_residual_blocks: int = 1
    exposure_voxel_bins: int = 6
    image_channels: int = 1
    reduction: int = 4
    shared_squeeze: bool = False
    bidirectional: bool = True
    activation: str = "leaky_relu"
    residual_scale: float = 1.0

    def __post_init__(self):
        if self.scales < 1:
            raise ValueError(f"scales must be >= 1, got {self.scales}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.n_interp < 0:
            raise ValueError(f"n_interp must be >= 0, got {self.n_interp}")
        if self.residual_blocks_per_evr < 0 or self.image_residual_blocks < 0:
            raise ValueError("residual block counts must be >= 0")
        if self.exposure_voxel_bins < 2:
            raise ValueError(f"exposure_voxel_bins must be >= 2, got {self.exposure_voxel_bins}")
        if self.image_channels not in (1, 3):
            raise ValueError(f"image_channels must be 1 or 3, got {self.image_channels}")
        if self.base_channels % self.reduction:
            raise ValueError(
                f"base_channels {self.base_channels} not divisible by reduction {self.reduction}"
            )
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0 < self.residual_scale <= 1:
            raise ValueError(f"residual_scale must be in (0, 1], got {self.residual_scale}")

    @property
    def outputs(self) -> int:
        return self.n_interp + 2

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level

    @classmethod
    def from_dict(cls, d: dict) -> "RefidConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown RefidConfig key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RefidInputs:
    """Network inputs as channel-first arrays.

    ``left``/``right``: ``ch x H x W`` key frames; ``e0``/``e1``: exposure
    voxels; ``fwd``/``bwd``: ``(n+2) x H x W`` grids over ``[mid0, mid1]``.
    """

    left: np.ndarray
    right: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray
    window: tuple[float, float] = (0.0, 1.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape[1:]

    def swapped(self) -> "RefidInputs":
        """Time-mirrored inputs: key frames, exposure voxels and sweep grids exchanged."""
        return RefidInputs(self.right, self.left, self.e1, self.e0, self.bwd, self.fwd, self.window)

    def target_times(self) -> np.ndarray:
        return np.linspace(self.window[0], self.window[1], self.fwd.shape[0])


def _channels_first(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    return img[None] if img.ndim == 2 else np.moveaxis(img, -1, 0)


def make_inputs(left: ExposedFrame, right: ExposedFrame, e0: VoxelGrid, e1: VoxelGrid,
                fwd: VoxelGrid, bwd: VoxelGrid) -> RefidInputs:
    return RefidInputs(
        _channels_first(left.image), _channels_first(right.image),
        e0.data, e1.data, fwd.data, bwd.data, fwd.window,
    )


def prepare_inputs(left: ExposedFrame, right: ExposedFrame, stream: EventStream,
                   n: int, exposure_bins: int = 6) -> RefidInputs:
    """Build every voxel input from one stream covering both exposures."""
    e0 = exposure_voxel(stream, left, exposure_bins)
    e1 = exposure_voxel(stream, right, exposure_bins)
    between = slice_events(stream, left.midpoint, right.midpoint)
    fwd, bwd = bidirectional_pair(between, n)
    return make_inputs(left, right, e0, e1, fwd, bwd)


def sharp_inputs(left_image, right_image, stream: EventStream, n: int,
                 exposure_bins: int = 6) -> RefidInputs:
    """Inputs for key frames taken as instantaneous captures at the stream's window ends.

    The exposure voxels are all zero; the sweep grids cover the whole window.
    """
    left, right = _channels_first(left_image), _channels_first(right_image)
    if left.shape != right.shape or left.shape[1:] != stream.shape:
        raise ValueError(
            f"key frames {left.shape[1:]} / {right.shape[1:]} vs events {stream.shape}"
        )
    fwd, bwd = bidirectional_pair(stream, n)
    zeros = np.zeros((exposure_bins,) + stream.shape)
    return RefidInputs(left, right, zeros, zeros.copy(), fwd.data, bwd.data, fwd.window)


class Refid(Module):
    def __init__(self, cfg: RefidConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c = cfg.channels
        act = cfg.activation
        s = cfg.scales

        img_in = 2 * (cfg.image_channels + cfg.exposure_voxel_bins)
        self.img_head = Conv2d(img_in, c(0), 3, rng=rng)
        self.img_res = [
            [ResidualBlock(c(j), act, cfg.residual_scale, rng=rng)
             for _ in range(cfg.image_residual_blocks)]
            for j in range(s)
        ]
        self.img_down = [Conv2d(c(j), c(j + 1), 3, stride=2, rng=rng) for j in range(s - 1)]

        self.head_f = Conv2d(2, c(0), 3, rng=rng)
        self.head_b = Conv2d(2, c(0), 3, rng=rng)
        n_res = cfg.residual_blocks_per_evr
        rs = cfg.residual_scale
        self.evr_f = [EVRBlock(c(j), c(j), n_res, act, rs, rng=rng) for j in range(s)]
        self.evr_b = [EVRBlock(c(j), c(j), n_res, act, rs, rng=rng) for j in range(s)]
        self.down_f = [Conv2d(c(j), c(j + 1), 3, stride=2, rng=rng) for j in range(s - 1)]
        self.down_b = [Conv2d(c(j), c(j + 1), 3, stride=2, rng=rng) for j in range(s - 1)]
        self.fuse = [Conv2d(2 * c(j), c(j), 1, rng=rng) for j in range(s)]
        self.egaca = [
            EGACA(c(j), cfg.reduction, cfg.shared_squeeze, act, rng=rng) for j in range(s)
        ]

        self.up = [ConvTranspose2d(c(j + 1), c(j), rng=rng) for j in range(s - 1)]
        self.dec = [Conv2d(c(j), c(j), 3, rng=rng) for j in range(s - 1)]
        self.out = Conv2d(c(0), cfg.image_channels, 3, rng=rng)

    # -- helpers -------------------------------------------------------------

    def _check(self, inp: RefidInputs) -> None:
        cfg = self.cfg
        h, w = inp.shape
        factor = 2 ** (cfg.scales - 1)
        if h % factor or w % factor:
            raise ValueError(f"image {h}x{w} must be divisible by {factor} for {cfg.scales} scales")
        expect = {
            "left": (cfg.image_channels, h, w),
            "right": (cfg.image_channels, h, w),
            "e0": (cfg.exposure_voxel_bins, h, w),
            "e1": (cfg.exposure_voxel_bins, h, w),
            "fwd": (cfg.outputs, h, w),
            "bwd": (cfg.outputs, h, w),
        }
        for name, shape in expect.items():
            got = getattr(inp, name).shape
            if got != shape:
                raise ValueError(f"input {name} has shape {got}, config expects {shape}")

    @staticmethod
    def _pair(grid: Tensor, k: int) -> Tensor:
        """Channels ``(k-1, k)`` of a sweep grid; channel ``-1`` is all zeros."""
        if k == 0:
            zero = Tensor(np.zeros((1,) + grid.shape[1:]))
            return T.concat([zero, T.narrow(grid, 0, 1)])
        return T.narrow(grid, k - 1, k + 1)

    def image_features(self, inp: RefidInputs) -> list[Tensor]:
        x = T.concat([as_input(inp.left), as_input(inp.e0), as_input(inp.right), as_input(inp.e1)])
        act = activation(self.cfg.activation)
        feats = []
        x = act(self.img_head(x))
        for j in range(self.cfg.scales):
            if j > 0:
                x = act(self.img_down[j - 1](x))
            for block in self.img_res[j]:
                x = block(x)
            feats.append(x)
        return feats

    def backward_sweep(self, bwd: Tensor, shapes) -> list[list[Tensor]]:
        """Backward recurrent features ``[i][j]`` for every iteration and level."""
        cfg = self.cfg
        n1 = cfg.outputs
        cached: list[list[Tensor] | None] = [None] * n1
        h = [Tensor(np.zeros(sh)) for sh in shapes]
        for i in range(n1 - 1, -1, -1):
            k = n1 - 1 - i  # the reversed grid runs backward in time
            x = self.head_b(self._pair(bwd, k))
            feats = []
            for j in range(cfg.scales):
                x_hat, h[j] = self.evr_b[j](x, h[j])
                feats.append(x_hat)
                if j < cfg.scales - 1:
                    x = self.down_b[j](x_hat)
            cached[i] = feats
        return cached

    def forward(self, inp: RefidInputs) -> list[Tensor]:
        self._check(inp)
        cfg = self.cfg
        act = activation(cfg.activation)
        img = self.image_features(inp)
        shapes = [f.shape for f in img]
        fwd, bwd = as_input(inp.fwd), as_input(inp.bwd)
        if cfg.bidirectional:
            back = self.backward_sweep(bwd, shapes)
        else:
            back = [[Tensor(np.zeros(sh)) for sh in shapes]] * cfg.outputs

        h = [Tensor(np.zeros(sh)) for sh in shapes]
        frames = []
        for i in range(cfg.outputs):
            x = self.head_f(self._pair(fwd, i))
            enc = []
            for j in range(cfg.scales):
                x_hat, h[j] = self.evr_f[j](x, h[j])
                mixed = self.fuse[j](T.concat([back[i][j], x_hat]))
                fused = self.egaca[j](mixed, img[j])
                enc.append(fused)
                if j < cfg.scales - 1:
                    x = self.down_f[j](fused)
            d = enc[-1]
            for j in range(cfg.scales - 2, -1, -1):
                d = act(self.up[j](d)) + enc[j]
                d = act(self.dec[j](d))
            frames.append(self.out(d))
        return frames

    def predict(self, inp: RefidInputs) -> list[np.ndarray]:
        """Inference without recording; returns ``H x W`` (or ``H x W x 3``) arrays."""
        with T.no_grad():
            frames = self.forward(inp)
        return [f.data[0] if f.shape[0] == 1 else np.moveaxis(f.data, 0, -1) for f in frames]

    # -- weights -----------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape}, expected {p.shape}")
            p.data = arr.astype(p.data.dtype)

    def symmetrize(self) -> None:
        """Tie weights so that time-mirrored inputs give the mirrored output order.

        Copies the forward head and recurrent blocks into the backward ones,
        makes each fuse conv treat both directions alike and makes the image
        head treat ``(I0, E0)`` and ``(I1, E1)`` alike.  Exact only for
        ``scales == 1``: deeper levels see fused features only on the forward
        side.
        """
        for src, dst in zip([self.head_f, *self.evr_f], [self.head_b, *self.evr_b]):
            for (_, a), (_, b) in zip(src.named_parameters(), dst.named_parameters()):
                b.data = a.data.copy()
        for conv in self.fuse:
            half = conv.weight.shape[1] // 2
            w = conv.weight.data
            avg = 0.5 * (w[:, :half] + w[:, half:])
            conv.weight.data = np.concatenate([avg, avg], axis=1)
        w = self.img_head.weight.data
        g = w.shape[1] // 2
        avg = 0.5 * (w[:, :g] + w[:, g:])
        self.img_head.weight.data = np.concatenate([avg, avg], axis=1)


def as_input(arr) -> Tensor:
    return arr if isinstance(arr, Tensor) else Tensor(arr)
