"""Numpy layer set and the channel-attention transformer denoiser."""

from .checkpoint import CheckpointError, load_denoiser, read_params, save_denoiser, write_params
from .denoiser import Denoiser, DenoiserConfig, Stem, TransformerBlock
from .layers import (
    AvgPool2,
    ChannelAttention,
    Conv2d,
    Dense,
    LayerNorm,
    Pointwise,
    SiLU,
    Upsample2,
    sinusoidal_embedding,
)
from .params import Params

__all__ = [
    "AvgPool2",
    "ChannelAttention",
    "CheckpointError",
    "Conv2d",
    "Dense",
    "Denoiser",
    "DenoiserConfig",
    "LayerNorm",
    "Params",
    "Pointwise",
    "SiLU",
    "Stem",
    "TransformerBlock",
    "Upsample2",
    "load_denoiser",
    "read_params",
    "save_denoiser",
    "sinusoidal_embedding",
    "write_params",
]
