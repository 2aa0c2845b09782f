"""Binary parameter checkpoints.

Layout (all integers little-endian ``u32``)::

    b"UWDM" | version | n_params |
    n_params x ( name_len | name (utf-8) | rank | dims... | float32 values )

Values are stored row-major as little-endian IEEE-754 single precision.
"""

from __future__ import annotations

import os
import struct
from collections import OrderedDict
from typing import BinaryIO, Dict

import numpy as np

from .denoiser import Denoiser, DenoiserConfig
from .params import Params

MAGIC = b"UWDM"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "CheckpointError", "write_params", "read_params", "save_denoiser", "load_denoiser", "config_from_shapes"]


class CheckpointError(ValueError):
    pass


def _u32(f: BinaryIO) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack("<I", raw)[0]


def write_params(values: Dict[str, np.ndarray], path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(values)))
        for name, arr in values.items():
            raw_name = name.encode("utf-8")
            arr = np.asarray(arr)
            f.write(struct.pack("<I", len(raw_name)))
            f.write(raw_name)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    os.replace(tmp, path)


def read_params(path) -> "OrderedDict[str, np.ndarray]":
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint")
        version = _u32(f)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(_u32(f)):
            name = f.read(_u32(f)).decode("utf-8")
            rank = _u32(f)
            dims = tuple(_u32(f) for _ in range(rank))
            count = int(np.prod(dims, dtype=np.int64))
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError(f"{path}: truncated values for {name!r}")
            if name in out:
                raise CheckpointError(f"{path}: duplicate parameter {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return out


def config_from_shapes(values: Dict[str, np.ndarray], gate: str = "add") -> DenoiserConfig:
    """Recover the architecture hyper-parameters from stored shapes."""
    try:
        k, _, cin2, width = values["stem.conv.w"].shape
        time_dim = values["stem.time.w"].shape[0]
        attn_kernel = values["enc1.att.w"].shape[0]
        ff_mult = values["enc1.ff1.w"].shape[1] // width
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks parameter {exc}") from None
    return DenoiserConfig(width=width, time_dim=time_dim, attn_kernel=attn_kernel, gate=gate, ff_mult=ff_mult, image_channels=cin2 // 2)


def save_denoiser(model: Denoiser, path) -> None:
    write_params(model.params.values, path)


def load_denoiser(path, gate: str = "add") -> Denoiser:
    values = read_params(path)
    cfg = config_from_shapes(values, gate=gate)
    model = Denoiser(cfg, seed=None, dtype=np.float32)
    try:
        model.params.load_state(values)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return model


def params_from_file(path) -> Params:
    p = Params(np.float32)
    for k, v in read_params(path).items():
        p.add(k, v)
    return p
