"""File helpers: atomic writes and binary netpbm (P5/P6) images."""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a sibling temp file, fsync, then rename over ``path``.

    Missing parent directories are created.  Readers never observe a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        os.fchmod(fd, 0o666 & ~_umask())
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_netpbm(path) -> np.ndarray:
    """Read a binary P5 (gray) or P6 (color) image as float64 in ``[0, 1]``.

    Returns ``H x W`` for P5 and ``H x W x 3`` for P6.  ``maxval`` up to 65535
    is accepted (16-bit samples are big-endian per the netpbm format).
    """
    buf = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise ValueError(f"{path}: truncated netpbm header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported netpbm magic {magic!r}")
    width, height, maxval = (int(f) for f in fields[1:])
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: maxval {maxval} out of range")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(buf) - pos < count * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    img = data.astype(np.float64) / maxval
    return img.reshape(height, width, 3) if channels == 3 else img.reshape(height, width)


def encode_netpbm(image: np.ndarray, deep: bool = False) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")
    maxval = 65535 if deep else 255
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    body = q.astype(">u2" if deep else "u1").tobytes()
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n{maxval}\n".encode() + body


def write_netpbm(path, image: np.ndarray, deep: bool = False) -> None:
    atomic_write(path, encode_netpbm(image, deep=deep))


def list_images(directory) -> list[Path]:
    """Netpbm files in ``directory`` in lexicographic order."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".pnm"))
