"""Event records, immutable event streams and the EVT1 / CSV file formats.

An event is ``(x, y, t, p)``: pixel column, pixel row, timestamp in seconds
and polarity in ``{-1, +1}``.  Streams keep their events sorted by timestamp
(stable: equal timestamps keep insertion order) inside a closed window
``[t_begin, t_end]``.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ._io import atomic_write


class FormatError(ValueError):
    """Raised when an event/voxel/weight file violates its binary layout."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.message = message
        self.offset = offset

    def with_path(self, path) -> "FormatError":
        return FormatError(f"{path}: {self.message}", self.offset)


class Event(NamedTuple):
    x: int
    y: int
    t: float
    p: int


class EventStream:
    """Time-sorted, immutable collection of events on a ``width x height`` sensor.

    The coordinate and polarity arrays are stored read-only; operations
    return new streams.
    """

    __slots__ = ("x", "y", "t", "p", "t_begin", "t_end", "width", "height")

    def __init__(self, x, y, t, p, window, width, height, *, sort=True, validate=True):
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        p = np.asarray(p, dtype=np.int8).reshape(-1)
        if not (x.size == y.size == t.size == p.size):
            raise ValueError(
                f"field lengths differ: x={x.size} y={y.size} t={t.size} p={p.size}"
            )
        t_begin, t_end = (float(v) for v in window)
        if sort and t.size > 1 and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            x, y, t, p = x[order], y[order], t[order], p[order]
        for arr in (x, y, t, p):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t_begin", t_begin)
        object.__setattr__(self, "t_end", t_end)
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        if validate:
            self.validate()

    def __setattr__(self, name, value):
        raise AttributeError("EventStream is immutable")

    @classmethod
    def empty(cls, window, width, height) -> "EventStream":
        return cls([], [], [], [], window, width, height)

    @classmethod
    def from_events(cls, events: Iterable, window, width, height) -> "EventStream":
        rows = [tuple(e) for e in events]
        if not rows:
            return cls.empty(window, width, height)
        x, y, t, p = zip(*rows)
        return cls(x, y, t, p, window, width, height)

    @property
    def window(self) -> tuple[float, float]:
        return (self.t_begin, self.t_end)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __len__(self) -> int:
        return int(self.t.size)

    def __iter__(self):
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __repr__(self) -> str:
        return (
            f"EventStream(n={len(self)}, window=({self.t_begin!r}, {self.t_end!r}), "
            f"size={self.width}x{self.height})"
        )

    def validate(self) -> None:
        """Check every stream invariant; raise ``ValueError`` on the first violation."""
        if not (np.isfinite(self.t_begin) and np.isfinite(self.t_end)):
            raise ValueError("window bounds must be finite")
        if self.t_end < self.t_begin:
            raise ValueError(f"window end {self.t_end} precedes start {self.t_begin}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor size must be positive, got {self.width}x{self.height}")
        if len(self) == 0:
            return
        if not np.all(np.isfinite(self.t)):
            raise ValueError("timestamps must be finite")
        if np.any(np.diff(self.t) < 0):
            raise ValueError("events are not sorted by timestamp")
        if self.t[0] < self.t_begin or self.t[-1] > self.t_end:
            raise ValueError(
                f"event timestamps [{self.t[0]}, {self.t[-1]}] leave window "
                f"[{self.t_begin}, {self.t_end}]"
            )
        if np.any((self.p != 1) & (self.p != -1)):
            raise ValueError("polarity must be exactly -1 or +1")
        if self.x.min() < 0 or self.x.max() >= self.width:
            raise ValueError(f"x coordinate outside [0, {self.width})")
        if self.y.min() < 0 or self.y.max() >= self.height:
            raise ValueError(f"y coordinate outside [0, {self.height})")

    def pixel_index(self) -> np.ndarray:
        """Flat row-major pixel index ``y * width + x`` of every event."""
        return self.y * self.width + self.x

    def total_polarity(self) -> int:
        return int(self.p.sum(dtype=np.int64))

    def equals(self, other: "EventStream") -> bool:
        """Exact equality of header and event sequence."""
        return (
            self.window == other.window
            and self.shape == other.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )


def _take(stream: EventStream, sl, window) -> EventStream:
    return EventStream(
        stream.x[sl], stream.y[sl], stream.t[sl], stream.p[sl],
        window, stream.width, stream.height, sort=False, validate=False,
    )


def _check_interval(stream: EventStream, a: float, b: float) -> None:
    if a > b:
        raise ValueError(f"interval start {a} exceeds end {b}")
    if a < stream.t_begin or b > stream.t_end:
        raise IndexError(
            f"interval [{a}, {b}] outside stream window [{stream.t_begin}, {stream.t_end}]"
        )


def slice_events(stream: EventStream, a: float, b: float) -> EventStream:
    """Events with ``a < t <= b``; the returned stream has window ``[a, b]``."""
    a, b = float(a), float(b)
    _check_interval(stream, a, b)
    lo = np.searchsorted(stream.t, a, side="right")
    hi = np.searchsorted(stream.t, b, side="right")
    return _take(stream, slice(lo, hi), (a, b))


def reverse(stream: EventStream) -> EventStream:
    """Reverse a stream in time and polarity.

    ``(x, y, t, p)`` becomes ``(x, y, t_begin + t_end - t, -p)``.  Walking the
    arrays backwards keeps the output sorted; equal timestamps come out in
    reverse insertion order so that ``reverse(reverse(s))`` restores the
    original ordering.
    """
    span = stream.t_begin + stream.t_end
    t = span - stream.t[::-1]
    # rounding of span - t can nudge a reflected endpoint out of the window
    np.clip(t, stream.t_begin, stream.t_end, out=t)
    return EventStream(
        stream.x[::-1], stream.y[::-1], t, -stream.p[::-1],
        stream.window, stream.width, stream.height, sort=False, validate=False,
    )


def polarity_sum(stream: EventStream, pixel: tuple[int, int], a: float, b: float) -> int:
    """Signed polarity sum at ``pixel=(x, y)`` over events with ``a < t <= b``."""
    x, y = int(pixel[0]), int(pixel[1])
    if not (0 <= x < stream.width and 0 <= y < stream.height):
        raise IndexError(f"pixel ({x}, {y}) outside {stream.width}x{stream.height} sensor")
    sub = slice_events(stream, a, b)
    mask = (sub.x == x) & (sub.y == y)
    return int(sub.p[mask].sum(dtype=np.int64))


def polarity_image(stream: EventStream, a: float | None = None, b: float | None = None) -> np.ndarray:
    """``H x W`` integer image of polarity sums over ``(a, b]`` (whole stream by default)."""
    if a is not None or b is not None:
        a = stream.t_begin if a is None else a
        b = stream.t_end if b is None else b
        stream = slice_events(stream, a, b)
    flat = np.bincount(
        stream.pixel_index(), weights=stream.p.astype(np.float64),
        minlength=stream.width * stream.height,
    )
    return np.rint(flat).astype(np.int64).reshape(stream.height, stream.width)


def count_image(stream: EventStream) -> np.ndarray:
    """``H x W`` event counts (polarity ignored)."""
    flat = np.bincount(stream.pixel_index(), minlength=stream.width * stream.height)
    return flat.reshape(stream.height, stream.width)


def concatenate(streams: list[EventStream], window=None) -> EventStream:
    """Merge streams on the same sensor into one stream (stable by input order)."""
    if not streams:
        raise ValueError("need at least one stream")
    w, h = streams[0].width, streams[0].height
    if any((s.width, s.height) != (w, h) for s in streams):
        raise ValueError("streams differ in sensor size")
    if window is None:
        window = (min(s.t_begin for s in streams), max(s.t_end for s in streams))
    return EventStream(
        np.concatenate([s.x for s in streams]),
        np.concatenate([s.y for s in streams]),
        np.concatenate([s.t for s in streams]),
        np.concatenate([s.p for s in streams]),
        window, w, h,
    )


# -- EVT1 binary format ------------------------------------------------------

EVT1_MAGIC = b"EVT1"
_EVT1_HEADER = struct.Struct("<4sHHddQ")
EVT1_RECORD = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("t", "<f8"), ("p", "i1"), ("pad", "V3")]
)
assert _EVT1_HEADER.size == 32 and EVT1_RECORD.itemsize == 16


def encode_events(stream: EventStream) -> bytes:
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise ValueError("EVT1 stores sensor size as u16")
    header = _EVT1_HEADER.pack(
        EVT1_MAGIC, stream.width, stream.height, stream.t_begin, stream.t_end, len(stream)
    )
    rec = np.zeros(len(stream), dtype=EVT1_RECORD)
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["t"] = stream.t
    rec["p"] = stream.p
    return header + rec.tobytes()


def decode_events(buf: bytes) -> EventStream:
    if len(buf) < 4 or buf[:4] != EVT1_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {EVT1_MAGIC!r}", 0)
    if len(buf) < _EVT1_HEADER.size:
        raise FormatError("truncated header", len(buf))
    _, width, height, t_begin, t_end, count = _EVT1_HEADER.unpack_from(buf, 0)
    if width == 0 or height == 0:
        raise FormatError("zero sensor dimension", 4)
    if not (np.isfinite(t_begin) and np.isfinite(t_end)) or t_end < t_begin:
        raise FormatError(f"invalid window [{t_begin}, {t_end}]", 8)
    start = _EVT1_HEADER.size
    need = start + count * EVT1_RECORD.itemsize
    if len(buf) < need:
        whole = (len(buf) - start) // EVT1_RECORD.itemsize
        raise FormatError(
            f"truncated record {whole} of {count}", start + whole * EVT1_RECORD.itemsize
        )
    if len(buf) > need:
        raise FormatError("trailing bytes after last record", need)
    rec = np.frombuffer(buf, dtype=EVT1_RECORD, count=count, offset=start)

    def offset_of(mask):
        return start + int(np.flatnonzero(mask)[0]) * EVT1_RECORD.itemsize

    if count:
        x = rec["x"].astype(np.int64)
        y = rec["y"].astype(np.int64)
        t = rec["t"].copy()
        p = rec["p"].astype(np.int8)
        bad = (x >= width) | (y >= height)
        if bad.any():
            raise FormatError("event coordinates outside sensor", offset_of(bad))
        bad = (p != 1) & (p != -1)
        if bad.any():
            raise FormatError("polarity not in {-1, +1}", offset_of(bad) + 12)
        pad = np.frombuffer(rec["pad"].tobytes(), dtype=np.uint8).reshape(count, 3)
        bad = pad.any(axis=1)
        if bad.any():
            raise FormatError("non-zero padding", offset_of(bad) + 13)
        bad = ~np.isfinite(t) | (t < t_begin) | (t > t_end)
        if bad.any():
            raise FormatError("timestamp outside window", offset_of(bad) + 4)
        bad = np.zeros(count, dtype=bool)
        bad[1:] = t[1:] < t[:-1]
        if bad.any():
            raise FormatError("timestamps not sorted", offset_of(bad) + 4)
    else:
        x = y = np.zeros(0, np.int64)
        t = np.zeros(0)
        p = np.zeros(0, np.int8)
    return EventStream(x, y, t, p, (t_begin, t_end), width, height, sort=False, validate=False)


def write_events(stream: EventStream, path: str | os.PathLike) -> None:
    atomic_write(path, encode_events(stream))


def read_events(path: str | os.PathLike) -> EventStream:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        return decode_events(buf)
    except FormatError as exc:
        raise exc.with_path(path) from None


# -- CSV ---------------------------------------------------------------------

def write_events_csv(stream: EventStream, path: str | os.PathLike) -> None:
    lines = ["x,y,t,p"]
    lines += [f"{x},{y},{t!r},{p}" for x, y, t, p in stream]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_events_csv(path, width=None, height=None, window=None) -> EventStream:
    """Read ``x,y,t,p`` rows.  Missing geometry is inferred from the data."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "t", "p"]:
            raise ValueError(f"{path}: expected header x,y,t,p, got {header}")
        rows = [(int(r[0]), int(r[1]), float(r[2]), int(r[3])) for r in reader if r]
    if rows:
        x, y, t, p = (np.array(c) for c in zip(*rows))
    else:
        x = y = p = np.zeros(0, np.int64)
        t = np.zeros(0)
    if width is None:
        width = int(x.max()) + 1 if x.size else 1
    if height is None:
        height = int(y.max()) + 1 if y.size else 1
    if window is None:
        window = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
    return EventStream(x, y, t, p, window, width, height)


@dataclass(frozen=True)
class StreamSummary:
    count: int
    positive: int
    negative: int
    duration: float


def summarize(stream: EventStream) -> StreamSummary:
    pos = int((stream.p > 0).sum())
    return StreamSummary(len(stream), pos, len(stream) - pos, stream.t_end - stream.t_begin)
