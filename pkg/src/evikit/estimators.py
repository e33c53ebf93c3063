"""scikit-learn style wrappers around the pipeline stages.

Each wrapper keeps its hyper-parameters as constructor arguments
(``get_params``/``set_params``/``clone`` work) and stores learned state in
trailing-underscore attributes.  Inputs are domain objects rather than 2-D
feature matrices, so these do not go through ``check_array``; the
``check_*`` helpers below validate them instead.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .events import EventStream
from .nn.refid import Refid, RefidConfig, RefidInputs
from .nn.train import Sample, train_toy
from .physical import ExposedFrame, blurry_interpolate, edi_deblur
from .quality import psnr
from .simulator import FrameSequence, SimConfig, estimate_threshold, simulate
from .voxel import bidirectional_pair, voxelize


def check_image(image, name: str = "image") -> np.ndarray:
    """``H x W`` or ``H x W x 3`` finite float64 array with values in ``[0, 1]``."""
    img = np.asarray(image, dtype=np.float64)
    if not (img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 3)):
        raise ValueError(f"{name}: expected HxW or HxWx3, got shape {img.shape}")
    if img.size == 0:
        raise ValueError(f"{name}: empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name}: non-finite values")
    if img.min() < 0 or img.max() > 1:
        raise ValueError(f"{name}: values outside [0, 1]")
    return img


def check_stream(stream, shape=None, name: str = "events") -> EventStream:
    if not isinstance(stream, EventStream):
        raise TypeError(f"{name}: expected EventStream, got {type(stream).__name__}")
    if shape is not None and stream.shape != tuple(shape[:2]):
        raise ValueError(f"{name}: sensor is {stream.shape}, images are {tuple(shape[:2])}")
    return stream


def check_sequence(X, fps: float | None = None) -> FrameSequence:
    """Accept a :class:`FrameSequence` or a frame stack plus ``fps``."""
    if isinstance(X, FrameSequence):
        return X
    if fps is None:
        raise ValueError("a raw frame stack needs fps to assign timestamps")
    return FrameSequence.from_frames(list(np.asarray(X, dtype=np.float64)), fps=fps)


def check_exposed(frames) -> list[ExposedFrame]:
    if isinstance(frames, ExposedFrame):
        frames = [frames]
    out = list(frames)
    for k, f in enumerate(out):
        if not isinstance(f, ExposedFrame):
            raise TypeError(f"frames[{k}]: expected ExposedFrame, got {type(f).__name__}")
    return out


class EventSimulator(TransformerMixin, BaseEstimator):
    """Frames -> events.  ``transform`` accepts a sequence or a stack with ``fps``."""

    def __init__(self, c_mean=0.2, c_std=0.03, c_mode="fixed", log_eps=1e-3, seed=0,
                 noise_rate=0.0, hot_pixel_fraction=0.0, hot_pixel_rate=1000.0, c_floor=0.01,
                 fps=None, workers=1):
        self.c_mean = c_mean
        self.c_std = c_std
        self.c_mode = c_mode
        self.log_eps = log_eps
        self.seed = seed
        self.noise_rate = noise_rate
        self.hot_pixel_fraction = hot_pixel_fraction
        self.hot_pixel_rate = hot_pixel_rate
        self.c_floor = c_floor
        self.fps = fps
        self.workers = workers

    def fit(self, X=None, y=None):
        self.config_ = SimConfig(
            c_mean=self.c_mean, c_std=self.c_std, c_mode=self.c_mode, log_eps=self.log_eps,
            seed=self.seed, noise_rate=self.noise_rate,
            hot_pixel_fraction=self.hot_pixel_fraction, hot_pixel_rate=self.hot_pixel_rate,
            c_floor=self.c_floor,
        )
        return self

    def transform(self, X) -> EventStream:
        check_is_fitted(self, "config_")
        return simulate(check_sequence(X, self.fps), self.config_, workers=self.workers)


class ThresholdEstimator(BaseEstimator):
    """Least-squares contrast threshold from frames and their events."""

    def __init__(self, log_eps=1e-3, fps=None):
        self.log_eps = log_eps
        self.fps = fps

    def fit(self, X, stream):
        seq = check_sequence(X, self.fps)
        check_stream(stream, seq.shape)
        self.c_ = estimate_threshold(seq, stream, self.log_eps)
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "c_")
        return self.c_


class VoxelGridEncoder(TransformerMixin, BaseEstimator):
    """Events -> ``(n+2) x H x W`` grid; with ``bidirectional`` a ``(2, n+2, H, W)`` stack."""

    def __init__(self, n=3, bidirectional=False):
        self.n = n
        self.bidirectional = bidirectional

    def fit(self, X=None, y=None):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a non-negative integer, got {self.n}")
        self.bins_ = int(self.n) + 2
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "bins_")
        stream = check_stream(X)
        if self.bidirectional:
            fwd, bwd = bidirectional_pair(stream, self.bins_ - 2)
            return np.stack([fwd.data, bwd.data])
        return voxelize(stream, self.bins_ - 2).data


class EDIDeblurrer(BaseEstimator):
    """Blurry exposures -> sharp frames at their midpoints.

    ``fit`` stores the event stream; with ``c=None`` it also needs the sharp
    frame sequence to estimate the threshold.
    """

    def __init__(self, c=0.2):
        self.c = c

    def fit(self, stream, seq=None):
        self.stream_ = check_stream(stream)
        if self.c is None:
            if seq is None:
                raise ValueError("c=None needs the frame sequence to estimate the threshold")
            self.c_ = estimate_threshold(seq, self.stream_)
        else:
            if not self.c > 0:
                raise ValueError(f"c must be > 0, got {self.c}")
            self.c_ = float(self.c)
        return self

    def transform(self, frames) -> list[np.ndarray]:
        check_is_fitted(self, "stream_")
        return [edi_deblur(f, self.stream_, self.c_) for f in check_exposed(frames)]

    def score(self, frames, sharp) -> float:
        """Mean PSNR of the restored frames against ``sharp``."""
        out = self.transform(frames)
        if len(out) != len(sharp):
            raise ValueError(f"{len(out)} frames but {len(sharp)} references")
        return float(np.mean([psnr(a, check_image(b)) for a, b in zip(out, sharp)]))


class PhysicalInterpolator(BaseEstimator):
    """Training-free interpolation between two blurry key frames."""

    def __init__(self, c=0.2, deblur=True):
        self.c = c
        self.deblur = deblur

    def fit(self, stream, y=None):
        self.stream_ = check_stream(stream)
        return self

    def predict(self, left: ExposedFrame, right: ExposedFrame, taus) -> list[np.ndarray]:
        check_is_fitted(self, "stream_")
        return [blurry_interpolate(left, right, self.stream_, self.c, t, self.deblur)
                for t in np.atleast_1d(taus)]


class RefidInterpolator(BaseEstimator):
    """The recurrent network trained with Adam on :class:`Sample` lists."""

    def __init__(self, scales=2, base_channels=8, n_interp=3, residual_blocks_per_evr=2,
                 image_residual_blocks=1, exposure_voxel_bins=6, image_channels=1,
                 reduction=4, shared_squeeze=False, bidirectional=True,
                 activation="leaky_relu", residual_scale=1.0, steps=500, lr=1e-3, seed=0):
        self.scales = scales
        self.base_channels = base_channels
        self.n_interp = n_interp
        self.residual_blocks_per_evr = residual_blocks_per_evr
        self.image_residual_blocks = image_residual_blocks
        self.exposure_voxel_bins = exposure_voxel_bins
        self.image_channels = image_channels
        self.reduction = reduction
        self.shared_squeeze = shared_squeeze
        self.bidirectional = bidirectional
        self.activation = activation
        self.residual_scale = residual_scale
        self.steps = steps
        self.lr = lr
        self.seed = seed

    def _config(self) -> RefidConfig:
        names = RefidConfig.__dataclass_fields__
        return RefidConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, samples, y=None):
        samples = [samples] if isinstance(samples, Sample) else list(samples)
        result = train_toy(samples, self._config(), steps=self.steps, lr=self.lr, seed=self.seed)
        self.model_ = result.model
        self.losses_ = np.asarray(result.losses)
        return self

    def predict(self, inputs) -> list[list[np.ndarray]]:
        """``n + 2`` frames (``H x W`` or ``H x W x 3``) per input."""
        check_is_fitted(self, "model_")
        if isinstance(inputs, (RefidInputs, Sample)):
            inputs = [inputs]
        out = []
        for inp in inputs:
            inp = inp.inputs if isinstance(inp, Sample) else inp
            out.append(self.model_.predict(inp))
        return out

    def score(self, samples, y=None) -> float:
        """Mean PSNR over every output frame of every sample."""
        samples = [samples] if isinstance(samples, Sample) else list(samples)
        values = []
        for s, pred in zip(samples, self.predict(samples)):
            for p, t in zip(pred, s.targets):
                values.append(psnr(np.clip(p, 0, 1), t))
        return float(np.mean(values))

    @classmethod
    def from_model(cls, model: Refid) -> "RefidInterpolator":
        est = cls(**{k: v for k, v in model.cfg.to_dict().items()})
        est.model_ = model
        est.losses_ = np.zeros(0)
        return est


__all__ = [
    "check_image",
    "check_stream",
    "check_sequence",
    "check_exposed",
    "EventSimulator",
    "ThresholdEstimator",
    "VoxelGridEncoder",
    "EDIDeblurrer",
    "PhysicalInterpolator",
    "RefidInterpolator",
]
