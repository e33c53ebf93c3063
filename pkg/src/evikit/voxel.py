"""Voxel-grid encoding of event streams.

A grid has ``n + 2`` temporal bins whose centres span the stream window
uniformly (bin 0 at ``t_begin``, bin ``n + 1`` at ``t_end``).  Each event's
polarity is split between its two nearest bin centres with linear (tent)
weights, so the per-pixel sum over bins equals the per-pixel polarity sum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write
from .events import EventStream, FormatError, reverse, slice_events


@dataclass(frozen=True)
class VoxelGrid:
    data: np.ndarray  # (n + 2) x H x W
    window: tuple[float, float]

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] < 2:
            raise ValueError(f"voxel data must be (n+2) x H x W, got shape {self.data.shape}")

    @property
    def n(self) -> int:
        return self.data.shape[0] - 2

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def bin_times(self) -> np.ndarray:
        return np.linspace(self.window[0], self.window[1], self.bins)

    def mass(self) -> float:
        return float(self.data.sum())


def voxelize(stream: EventStream, n: int) -> VoxelGrid:
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    bins = n + 2
    h, w = stream.shape
    t0, t1 = stream.window
    flat = np.zeros(bins * h * w)
    if len(stream):
        if not t1 > t0:
            raise ValueError(f"degenerate window [{t0}, {t1}] holds {len(stream)} events")
        pos = (stream.t - t0) / (t1 - t0) * (bins - 1)
        pos = np.clip(pos, 0.0, bins - 1)
        left = np.minimum(np.floor(pos).astype(np.int64), bins - 2)
        frac = pos - left
        pol = stream.p.astype(np.float64)
        pix = stream.pixel_index()
        # np.add.at accumulates in event order: deterministic
        np.add.at(flat, left * h * w + pix, pol * (1.0 - frac))
        np.add.at(flat, (left + 1) * h * w + pix, pol * frac)
    return VoxelGrid(flat.reshape(bins, h, w), (float(t0), float(t1)))


def bidirectional_pair(stream: EventStream, n: int) -> tuple[VoxelGrid, VoxelGrid]:
    """Grids of the stream and of its time-and-polarity reversal."""
    return voxelize(stream, n), voxelize(reverse(stream), n)


def subvoxel(grid: VoxelGrid, i: int) -> np.ndarray:
    """Channels ``(i - 1, i)`` for recurrent iteration ``1 <= i <= n + 1``.

    Returns a read-only view into ``grid.data``.
    """
    if not 1 <= i <= grid.n + 1:
        raise IndexError(f"sub-voxel index {i} outside [1, {grid.n + 1}]")
    view = grid.data[i - 1:i + 1]
    view = view.view()
    view.flags.writeable = False
    return view


def exposure_voxel(stream: EventStream, frame, bins: int = 6) -> VoxelGrid:
    """Grid of the events inside ``frame``'s exposure ``[t_s, t_e]``."""
    if bins < 2:
        raise ValueError(f"exposure voxel needs >= 2 bins, got {bins}")
    return voxelize(slice_events(stream, frame.t_s, frame.t_e), bins - 2)


# -- VOX1 binary format ------------------------------------------------------

VOX1_MAGIC = b"VOX1"
_VOX1_HEADER = struct.Struct("<4sHHHdd")


def encode_voxel(grid: VoxelGrid) -> bytes:
    bins, h, w = grid.data.shape
    if max(bins, h, w) > 0xFFFF:
        raise ValueError("VOX1 stores dimensions as u16")
    header = _VOX1_HEADER.pack(VOX1_MAGIC, bins, h, w, grid.window[0], grid.window[1])
    return header + np.ascontiguousarray(grid.data, dtype="<f4").tobytes()


def decode_voxel(buf: bytes) -> VoxelGrid:
    if buf[:4] != VOX1_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {VOX1_MAGIC!r}", 0)
    if len(buf) < _VOX1_HEADER.size:
        raise FormatError("truncated header", len(buf))
    _, bins, h, w, t0, t1 = _VOX1_HEADER.unpack_from(buf, 0)
    if bins < 2 or h == 0 or w == 0:
        raise FormatError(f"invalid dimensions bins={bins} H={h} W={w}", 4)
    need = _VOX1_HEADER.size + 4 * bins * h * w
    if len(buf) != need:
        raise FormatError(f"payload is {len(buf)} bytes, expected {need}", min(len(buf), need))
    data = np.frombuffer(buf, dtype="<f4", offset=_VOX1_HEADER.size).reshape(bins, h, w)
    return VoxelGrid(data.astype(np.float64), (t0, t1))


def write_voxel(grid: VoxelGrid, path) -> None:
    atomic_write(path, encode_voxel(grid))


def read_voxel(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        return decode_voxel(buf)
    except FormatError as exc:
        raise exc.with_path(path) from None
