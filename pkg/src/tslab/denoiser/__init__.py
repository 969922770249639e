"""Small residual convolutional denoiser with hand-written backprop."""

from .backend import backend_name, compiled_available
from .model import (
    ConvLayer,
    DenoiserModel,
    ModelFormatError,
    TrainConfig,
    TrainHistory,
    forward,
    grad_wrt_input,
    grad_wrt_params,
    init_model,
    load_model,
    save_model,
    train,
)

__all__ = [
    "ConvLayer",
    "DenoiserModel",
    "ModelFormatError",
    "TrainConfig",
    "TrainHistory",
    "backend_name",
    "compiled_available",
    "forward",
    "grad_wrt_input",
    "grad_wrt_params",
    "init_model",
    "load_model",
    "save_model",
    "train",
]
