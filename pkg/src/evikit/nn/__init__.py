"""Small reverse-mode autodiff core and the toy recurrent interpolation network."""

from .checkpoint import load_model, save_model
from .layers import EGACA, ChannelSqueeze, Conv2d, ConvTranspose2d, Dense, EVRBlock, ResidualBlock
from .refid import Refid, RefidConfig, RefidInputs, make_inputs, prepare_inputs
from .tensor import Tensor, no_grad
from .train import Adam, Sample, TrainingDiverged, toy_sample, train_toy

__all__ = [
    "load_model",
    "save_model",
    "EGACA",
    "ChannelSqueeze",
    "Conv2d",
    "ConvTranspose2d",
    "Dense",
    "EVRBlock",
    "ResidualBlock",
    "Refid",
    "RefidConfig",
    "RefidInputs",
    "make_inputs",
    "prepare_inputs",
    "Tensor",
    "no_grad",
    "Adam",
    "Sample",
    "TrainingDiverged",
    "toy_sample",
    "train_toy",
]
