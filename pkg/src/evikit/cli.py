"""``evikit`` command line.

Exit codes: 0 success, 1 invalid input or configuration, 2 file-system
error.  Diagnostics go to stderr; results are written to files only, each
through a temp file and an atomic rename.  ``EVIKIT_THREADS`` caps the
worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write, list_images, read_netpbm, write_netpbm
from .config import ConfigError, PipelineConfig, load_sim_config
from .events import FormatError, read_events, write_events
from .physical import ExposedFrame, blurry_interpolate, edi_deblur, fuse_latent
from .quality import BlurProtocol, psnr, ssim, synthesize_blur
from .simulator import FrameSequence, SimConfig, simulate
from .voxel import bidirectional_pair, voxelize, write_voxel

log = logging.getLogger("evikit")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def thread_cap() -> int:
    cores = os.cpu_count() or 1
    raw = os.environ.get("EVIKIT_THREADS")
    if raw is None:
        return cores
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"EVIKIT_THREADS must be a positive integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError(f"EVIKIT_THREADS must be a positive integer, got {raw!r}")
    return min(cap, cores)


def _pair(text: str, name: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"{name} must be 'a,b', got {text!r}")
    try:
        a, b = (float(v) for v in parts)
    except ValueError:
        raise ValueError(f"{name} must be two numbers, got {text!r}") from None
    return a, b


def _floats(text: str, name: str) -> list[float]:
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if not out:
        raise ValueError(f"{name} is empty")
    return out


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _ext(image: np.ndarray) -> str:
    return ".ppm" if image.ndim == 3 else ".pgm"


def _outdir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read_frames(directory) -> list[np.ndarray]:
    paths = list_images(directory)
    if not paths:
        raise ValueError(f"{directory}: no .pgm/.ppm frames")
    return [read_netpbm(p) for p in paths]


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> None:
    cfg = load_sim_config(args.config) if args.config else SimConfig()
    frames = _read_frames(args.frames)
    seq = FrameSequence.from_frames(frames, fps=args.fps)
    workers = min(args.workers or thread_cap(), thread_cap())
    log.info("simulate: %d frames %dx%d, %d worker(s)", len(seq), seq.shape[1], seq.shape[0], workers)
    stream = simulate(seq, cfg, workers=workers)
    write_events(stream, args.out)
    log.info("simulate: %d events -> %s", len(stream), args.out)


def cmd_blur(args) -> None:
    frames = _read_frames(args.frames)
    if len({f.shape for f in frames}) != 1:
        raise ValueError(f"{args.frames}: frames differ in size")
    proto = BlurProtocol(args.per_blur, args.skip, args.fps)
    times = np.arange(len(frames)) / args.fps
    bs = synthesize_blur(np.stack(frames), times, proto)
    out = _outdir(args.outdir)
    sharp_dir = _outdir(out / "sharp")
    _outdir(out / "gt")
    manifest = {"fps": args.fps, "per_blur": args.per_blur, "skip": args.skip,
                "blurry": [], "ground_truth": []}
    for k, (b, centre) in enumerate(zip(bs.blurry, bs.sharp_centers)):
        name = f"blurry_{k:04d}{_ext(b.image)}"
        write_netpbm(out / name, b.image, args.deep)
        write_netpbm(sharp_dir / f"sharp_{k:04d}{_ext(centre)}", centre, args.deep)
        manifest["blurry"].append({
            "file": name, "exposure": [b.t_s, b.t_e],
            "sharp": f"sharp/sharp_{k:04d}{_ext(centre)}",
            "frames": [bs.window_indices[k].start, bs.window_indices[k].stop - 1],
        })
    for k, (imgs, ts) in enumerate(zip(bs.ground_truth, bs.gt_times)):
        for j, (img, t) in enumerate(zip(imgs, ts)):
            name = f"gt/gt_{k:04d}_{j:02d}{_ext(img)}"
            write_netpbm(out / name, img, args.deep)
            manifest["ground_truth"].append({"file": name, "t": t, "after": k})
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
    log.info("blur: %d blurry frames, %d held-out frames -> %s",
             len(bs.blurry), len(manifest["ground_truth"]), out)


def cmd_voxelize(args) -> None:
    stream = read_events(args.events)
    if args.n < 0:
        raise ValueError(f"--n must be >= 0, got {args.n}")
    if args.out_bwd:
        fwd, bwd = bidirectional_pair(stream, args.n)
        write_voxel(fwd, args.out)
        write_voxel(bwd, args.out_bwd)
    else:
        write_voxel(voxelize(stream, args.n), args.out)
    log.info("voxelize: %d events into %d bins", len(stream), args.n + 2)


def cmd_deblur(args) -> None:
    t_s, t_e = _pair(args.exposure, "--exposure")
    image = read_netpbm(args.frame)
    stream = read_events(args.events)
    sharp = edi_deblur(ExposedFrame(image, t_s, t_e), stream, args.c, args.target)
    write_netpbm(args.out, np.clip(sharp, 0.0, 1.0), args.deep)
    log.info("deblur: %s -> %s", args.frame, args.out)


def _anchors(args, stream):
    """Key-frame exposures; without flags the key frames are sharp at the window ends."""
    if (args.left_exposure is None) != (args.right_exposure is None):
        raise ValueError("--left-exposure and --right-exposure must be given together")
    if args.left_exposure is None:
        return None, None, stream.t_begin, stream.t_end
    le = _pair(args.left_exposure, "--left-exposure")
    re_ = _pair(args.right_exposure, "--right-exposure")
    return le, re_, 0.5 * sum(le), 0.5 * sum(re_)


def cmd_interpolate(args) -> None:
    left, right = read_netpbm(args.left), read_netpbm(args.right)
    if left.shape != right.shape:
        raise ValueError(f"key frames differ in shape: {left.shape} vs {right.shape}")
    stream = read_events(args.events)
    taus = _floats(args.taus, "--taus")
    le, re_, m0, m1 = _anchors(args, stream)
    if not args.absolute:
        for f in taus:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"--taus fractions must be in [0, 1], got {f}")
        taus = [m0 + f * (m1 - m0) for f in taus]
    out = _outdir(args.outdir)
    for k, tau in enumerate(taus):
        if le is None:
            if not m0 <= tau <= m1:
                raise ValueError(f"tau {tau} outside [{m0}, {m1}]")
            img = fuse_latent(left, m0, right, m1, stream, args.c, tau)
        else:
            img = blurry_interpolate(ExposedFrame(left, *le), ExposedFrame(right, *re_),
                                     stream, args.c, tau, deblur=not args.no_deblur)
        write_netpbm(out / f"frame_{k:03d}{_ext(img)}", np.clip(img, 0.0, 1.0), args.deep)
    log.info("interpolate: %d frame(s) -> %s", len(taus), out)


def _pipeline_config(path) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


def cmd_train_toy(args) -> None:
    from .dataset import load_dataset
    from .nn.checkpoint import save_model
    from .nn.train import train_toy

    pc = _pipeline_config(args.config)
    cfg = pc.refid_config()
    steps = pc.model.steps if args.steps is None else args.steps
    seed = pc.model.seed if args.seed is None else args.seed
    if steps < 0:
        raise ValueError(f"--steps must be >= 0, got {steps}")
    data = load_dataset(args.data, cfg.n_interp, cfg.exposure_voxel_bins)
    log.info("train-toy: %d sample(s), %d steps, lr %g", len(data), steps, pc.model.lr)
    result = train_toy(data, cfg, steps=steps, lr=pc.model.lr, seed=seed, log=log.info)
    save_model(result.model, args.out)
    if args.losses:
        atomic_write(args.losses, json.dumps({"losses": result.losses}).encode())
    log.info("train-toy: weights -> %s", args.out)


def cmd_infer(args) -> None:
    from .nn.checkpoint import load_model
    from .nn.refid import prepare_inputs, sharp_inputs

    model = load_model(args.weights)
    cfg = model.cfg
    left, right = read_netpbm(args.left), read_netpbm(args.right)
    stream = read_events(args.events)
    le, re_, _, _ = _anchors(args, stream)
    if le is None:
        inputs = sharp_inputs(left, right, stream, cfg.n_interp, cfg.exposure_voxel_bins)
    else:
        inputs = prepare_inputs(ExposedFrame(left, *le), ExposedFrame(right, *re_), stream,
                                cfg.n_interp, cfg.exposure_voxel_bins)
    if inputs.left.shape[0] != cfg.image_channels:
        raise ValueError(f"model expects {cfg.image_channels} channel(s), images have "
                         f"{inputs.left.shape[0]}")
    out = _outdir(args.outdir)
    for k, img in enumerate(model.predict(inputs)):
        write_netpbm(out / f"frame_{k:03d}{_ext(img)}", np.clip(img, 0.0, 1.0), args.deep)
    log.info("infer: %d frame(s) -> %s", cfg.outputs, out)


def cmd_eval(args) -> None:
    pc = _pipeline_config(args.config)
    pred = list_images(args.pred)
    gt = list_images(args.gt)
    if not gt:
        raise ValueError(f"{args.gt}: no ground-truth frames")
    if len(pred) != len(gt):
        raise ValueError(f"{len(pred)} predicted frames in {args.pred} but {len(gt)} in {args.gt}")
    rows = []
    for p, g in zip(pred, gt):
        a, b = read_netpbm(p), read_netpbm(g)
        if a.shape != b.shape:
            raise ValueError(f"{p} is {a.shape}, {g} is {b.shape}")
        rows.append({
            "pred": p.name, "gt": g.name,
            "psnr": psnr(a, b, pc.eval.peak),
            "ssim": ssim(a, b, pc.eval.peak, pc.eval.ssim_window, pc.eval.ssim_sigma),
        })
    report = {
        "psnr_mean": float(np.mean([r["psnr"] for r in rows])),
        "ssim_mean": float(np.mean([r["ssim"] for r in rows])),
        "per_frame": rows,
    }
    atomic_write(args.report, json.dumps(report, indent=1, sort_keys=True).encode())
    log.info("eval: %d frame(s), psnr %.3f dB, ssim %.4f",
             len(rows), report["psnr_mean"], report["ssim_mean"])


def cmd_selfcheck(args) -> int:
    from .selfcheck import passed, run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""),
              file=sys.stderr)
    return EXIT_OK if passed(results) else EXIT_INVALID


# -- parser --------------------------------------------------------------------


def _add_anchor_flags(p) -> None:
    p.add_argument("--left-exposure", metavar="T_S,T_E",
                   help="exposure of the left key frame (default: sharp at the event window start)")
    p.add_argument("--right-exposure", metavar="T_S,T_E",
                   help="exposure of the right key frame (default: sharp at the event window end)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="only report errors")
    parser = argparse.ArgumentParser(prog="evikit", description=__doc__.split("\n\n")[0],
                                     parents=[common])
    parser.add_argument("--version", action="version", version=f"evikit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="frames -> EVT1 events")
    p.add_argument("--frames", required=True, help="directory of .pgm/.ppm frames")
    p.add_argument("--fps", required=True, type=_positive)
    p.add_argument("--config", help="JSON object with simulator settings")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("blur", parents=[common], help="average sharp frames into blurry exposures")
    p.add_argument("--frames", required=True)
    p.add_argument("--per-blur", type=int, default=11)
    p.add_argument("--skip", type=int, default=1)
    p.add_argument("--fps", type=_positive, default=240.0)
    p.add_argument("--outdir", required=True)
    p.add_argument("--deep", action="store_true", help="write 16-bit images")
    p.set_defaults(func=cmd_blur)

    p = sub.add_parser("voxelize", parents=[common], help="events -> VOX1 grid(s)")
    p.add_argument("--events", required=True)
    p.add_argument("--n", type=int, required=True, help="interior bins; the grid has n + 2")
    p.add_argument("--out", required=True)
    p.add_argument("--out-bwd", help="also write the time-reversed grid")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("deblur", parents=[common], help="restore a blurry frame from its exposure events")
    p.add_argument("--frame", required=True)
    p.add_argument("--exposure", required=True, metavar="T_S,T_E")
    p.add_argument("--events", required=True)
    p.add_argument("--c", type=_positive, default=0.2)
    p.add_argument("--target", type=float, default=None, help="latent time (default: midpoint)")
    p.add_argument("--out", required=True)
    p.add_argument("--deep", action="store_true")
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("interpolate", parents=[common], help="latent frames between two key frames")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--taus", required=True,
                   help="comma-separated fractions of the span between the key-frame anchors")
    p.add_argument("--absolute", action="store_true", help="--taus are times in seconds")
    p.add_argument("--c", type=_positive, default=0.2)
    _add_anchor_flags(p)
    p.add_argument("--no-deblur", action="store_true")
    p.add_argument("--outdir", required=True)
    p.add_argument("--deep", action="store_true")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("train-toy", parents=[common], help="fit the recurrent network on sample directories")
    p.add_argument("--config", help="pipeline JSON (model and voxel sections are used)")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--losses", help="optional JSON file for the loss curve")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("infer", parents=[common], help="run a trained network")
    p.add_argument("--weights", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--events", required=True)
    _add_anchor_flags(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--deep", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of predicted frames against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config", help="pipeline JSON (eval section is used)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", parents=[common], help="run the embedded golden vectors")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def _io_message(exc: OSError) -> str:
    path = exc.filename if exc.filename is not None else ""
    reason = exc.strerror or str(exc)
    return f"{path}: {reason}" if path else reason


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("evikit: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.WARNING if getattr(args, "quiet", False) else logging.INFO)
    log.propagate = False
    try:
        code = args.func(args)
    except OSError as exc:
        log.error("error: %s", _io_message(exc))
        return EXIT_IO
    except (ConfigError, FormatError) as exc:
        log.error("error: %s", exc)
        return EXIT_INVALID
    except (ValueError, IndexError, TypeError, ArithmeticError, RuntimeError) as exc:
        log.error("error: %s", exc)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
