"""RWT1 weight checkpoints.

Little-endian layout::

    "RWT1"
    u32 config length, config JSON (UTF-8, sorted keys, compact)
    repeated until EOF:
        u16 name length, name (UTF-8)
        u8 rank, rank x u32 dims
        prod(dims) x f32 data
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .._io import atomic_write
from ..events import FormatError
from .refid import Refid, RefidConfig

RWT1_MAGIC = b"RWT1"


def encode_weights(config: dict, arrays: dict[str, np.ndarray]) -> bytes:
    cfg = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    parts = [RWT1_MAGIC, struct.pack("<I", len(cfg)), cfg]
    for name, arr in arrays.items():
        raw = name.encode()
        if len(raw) > 0xFFFF:
            raise ValueError(f"array name too long: {name[:40]}...")
        arr = np.asarray(arr)
        if arr.ndim > 0xFF:
            raise ValueError(f"{name}: rank {arr.ndim} exceeds u8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(buf: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if buf[:4] != RWT1_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {RWT1_MAGIC!r}", 0)
    pos = 4

    def need(n: int, what: str) -> None:
        if pos + n > len(buf):
            raise FormatError(f"truncated {what}", pos)

    need(4, "config length")
    (clen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    need(clen, "config block")
    try:
        config = json.loads(buf[pos:pos + clen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"config is not valid JSON: {exc}", pos) from None
    if not isinstance(config, dict):
        raise FormatError("config must be a JSON object", pos)
    pos += clen
    arrays: dict[str, np.ndarray] = {}
    while pos < len(buf):
        start = pos
        need(2, "name length")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        need(nlen, "name")
        try:
            name = buf[pos:pos + nlen].decode()
        except UnicodeDecodeError:
            raise FormatError("array name is not UTF-8", pos) from None
        pos += nlen
        need(1, "rank")
        rank = buf[pos]
        pos += 1
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(dims, dtype=np.int64))
        need(4 * count, f"data of {name!r}")
        if name in arrays:
            raise FormatError(f"duplicate array {name!r}", start)
        arrays[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
        pos += 4 * count
    return config, arrays


def save_model(model: Refid, path) -> None:
    atomic_write(path, encode_weights(model.cfg.to_dict(), model.state_dict()))


def load_model(path) -> Refid:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        config, arrays = decode_weights(buf)
    except FormatError as exc:
        raise exc.with_path(path) from None
    model = Refid(RefidConfig.from_dict(config))
    model.load_state_dict(arrays)
    return model
