"""Versioned binary persistence for trained Q-networks.

Layout (all integers little-endian uint32, parameters little-endian float64):

    magic "AOIQ" | version | n_uavs | n_devices | model_tag | n_dims |
    dims[n_dims] | theta[param_count(dims)]

The parameter block is the flat layer-major vector (weights then bias per
layer), so a save/load cycle is bit-exact.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .agents import QNetwork
from .errors import (
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    IncompatibleCheckpointError,
)
from .kernels import param_count

MAGIC = b"AOIQ"
VERSION = 1


@dataclass(frozen=True)
class CheckpointMeta:
    n_uavs: int
    n_devices: int
    model: int
    layer_dims: tuple[int, ...]


def save_checkpoint(path, net: QNetwork, n_uavs: int, n_devices: int, model: int) -> None:
    dims = [int(d) for d in net.dims]
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<5I", VERSION, n_uavs, n_devices, model, len(dims))
    blob += struct.pack(f"<{len(dims)}I", *dims)
    blob += np.ascontiguousarray(net.theta, dtype="<f8").tobytes()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[QNetwork, CheckpointMeta]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointMagicError(f"{path}: expected magic {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 4 + 20:
        raise CheckpointTruncatedError(f"{path}: header cut short at {len(data)} bytes")
    version, n_uavs, n_devices, model, n_dims = struct.unpack_from("<5I", data, 4)
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: version {version}, supported {VERSION}")
    off = 24
    if len(data) < off + 4 * n_dims:
        raise CheckpointTruncatedError(f"{path}: dims list cut short")
    dims = struct.unpack_from(f"<{n_dims}I", data, off)
    off += 4 * n_dims
    n_params = param_count(dims)
    if len(data) < off + 8 * n_params:
        raise CheckpointTruncatedError(
            f"{path}: expected {n_params} parameters, file holds "
            f"{(len(data) - off) // 8}"
        )
    theta = np.frombuffer(data, dtype="<f8", count=n_params, offset=off).astype(np.float64)
    net = QNetwork(dims=np.asarray(dims, dtype=np.int64), theta=theta)
    return net, CheckpointMeta(n_uavs=n_uavs, n_devices=n_devices, model=model,
                               layer_dims=tuple(int(d) for d in dims))


def check_compatible(meta: CheckpointMeta, n_uavs: int, n_devices: int, model: int) -> None:
    if (meta.n_uavs, meta.n_devices, meta.model) != (n_uavs, n_devices, model):
        raise IncompatibleCheckpointError(
            f"checkpoint built for U={meta.n_uavs} D={meta.n_devices} "
            f"{meta.model}-direction model; run requests U={n_uavs} D={n_devices} "
            f"{model}-direction model"
        )
