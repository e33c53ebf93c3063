"""On-disk training samples.

A sample directory holds::

    left.pgm, right.pgm      blurry key frames (.ppm for color)
    events.evt1              events covering both exposures
    meta.json                {"left_exposure": [t_s, t_e], "right_exposure": [t_s, t_e]}
    targets/*.pgm            n + 2 sharp frames at the voxel-bin centres, lexicographic

A dataset root is either one sample directory or a directory of them.
"""

from __future__ import annotations

import json
from pathlib import Path

from ._io import atomic_write, list_images, read_netpbm, write_netpbm
from .events import read_events, write_events
from .nn.refid import prepare_inputs
from .nn.train import Sample
from .physical import ExposedFrame


def _image_name(stem: str, image) -> str:
    return f"{stem}.ppm" if image.ndim == 3 else f"{stem}.pgm"


def write_sample_dir(path, left: ExposedFrame, right: ExposedFrame, stream, targets,
                     deep: bool = True) -> None:
    root = Path(path)
    (root / "targets").mkdir(parents=True, exist_ok=True)
    write_netpbm(root / _image_name("left", left.image), left.image, deep)
    write_netpbm(root / _image_name("right", right.image), right.image, deep)
    write_events(stream, root / "events.evt1")
    meta = {"left_exposure": [left.t_s, left.t_e], "right_exposure": [right.t_s, right.t_e]}
    atomic_write(root / "meta.json", json.dumps(meta, sort_keys=True).encode())
    for k, t in enumerate(targets):
        write_netpbm(root / "targets" / _image_name(f"target_{k:03d}", t), t, deep)


def _find(root: Path, stem: str) -> Path:
    for ext in (".pgm", ".ppm", ".pnm"):
        if (root / f"{stem}{ext}").exists():
            return root / f"{stem}{ext}"
    raise FileNotFoundError(2, "No such file or directory", str(root / f"{stem}.pgm"))


def _exposure(meta: dict, key: str, path: Path) -> tuple[float, float]:
    value = meta.get(key)
    if not (isinstance(value, list) and len(value) == 2):
        raise ValueError(f"{path}: {key} must be a [t_s, t_e] pair")
    return float(value[0]), float(value[1])


def read_sample_dir(path, n: int, exposure_bins: int = 6) -> Sample:
    root = Path(path)
    meta_path = root / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{meta_path}: invalid JSON: {exc}") from None
    left = ExposedFrame(read_netpbm(_find(root, "left")), *_exposure(meta, "left_exposure", meta_path))
    right = ExposedFrame(read_netpbm(_find(root, "right")), *_exposure(meta, "right_exposure", meta_path))
    stream = read_events(root / "events.evt1")
    targets = [read_netpbm(p) for p in list_images(root / "targets")]
    if len(targets) != n + 2:
        raise ValueError(f"{root / 'targets'}: {len(targets)} frames, model expects n + 2 = {n + 2}")
    return Sample(prepare_inputs(left, right, stream, n, exposure_bins), targets)


def load_dataset(path, n: int, exposure_bins: int = 6) -> list[Sample]:
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(2, "No such directory", str(root))
    if (root / "meta.json").exists():
        return [read_sample_dir(root, n, exposure_bins)]
    dirs = sorted(d for d in root.iterdir() if (d / "meta.json").exists())
    if not dirs:
        raise ValueError(f"{root}: no sample directories (each needs meta.json)")
    return [read_sample_dir(d, n, exposure_bins) for d in dirs]
