"""
Binary checkpoint format for ``VelocityNet``.

Layout (little-endian):

- magic ``b"WOWNN1\\0"``
- format version, u32
- integer hyperparameters, u32 each, in ``NetConfig.INT_FIELDS`` order, then the architecture index
- float hyperparameters, f64 each, in ``NetConfig.FLOAT_FIELDS`` order
- tensor count, u32
- per tensor: rank u32, dims u32[rank], values f64[prod(dims)] row-major

Tensors are written in the network's fixed parameter order, so encoding is deterministic.
"""

import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from wow_flow.errors import DataFormatError, ShapeError
from wow_flow.net import ARCHITECTURES, NetConfig, VelocityNet, param_shapes
from wow_flow.utils.binary import ByteReader

__all__ = ["CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "encode_checkpoint", "decode_checkpoint", "save_checkpoint",
           "load_checkpoint"]

CHECKPOINT_MAGIC = b"WOWNN1\0"
CHECKPOINT_VERSION = 1


def encode_checkpoint(net: VelocityNet) -> bytes:
    """Serialize a network to bytes."""
    cfg = net.config
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    parts += [struct.pack("<I", getattr(cfg, name)) for name in NetConfig.INT_FIELDS]
    parts.append(struct.pack("<I", ARCHITECTURES.index(cfg.architecture)))
    parts += [struct.pack("<d", getattr(cfg, name)) for name in NetConfig.FLOAT_FIELDS]

    shapes = param_shapes(cfg)
    parts.append(struct.pack("<I", len(shapes)))
    for name, _ in shapes:
        tensor = np.ascontiguousarray(net.params[name], dtype="<f8")
        parts.append(struct.pack("<I", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.tobytes(order="C"))
    return b"".join(parts)


def decode_checkpoint(payload: bytes) -> VelocityNet:
    """
    Parse checkpoint bytes.

    Raises:
        DataFormatError: On a bad magic, unknown version, truncation, trailing bytes or tensors
            that do not match the stored configuration.
    """
    reader = ByteReader(payload, "checkpoint")
    magic = reader.take(len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        raise DataFormatError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", offset=0)
    version_offset = reader.offset
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", offset=version_offset)

    ints = {name: reader.u32(name) for name in NetConfig.INT_FIELDS}
    arch_offset = reader.offset
    arch = reader.u32("architecture")
    if arch >= len(ARCHITECTURES):
        raise DataFormatError(f"unknown architecture index {arch}", offset=arch_offset)
    floats = {name: reader.f64(name) for name in NetConfig.FLOAT_FIELDS}
    try:
        cfg = NetConfig(architecture=ARCHITECTURES[arch], **ints, **floats)
    except ShapeError as err:
        raise DataFormatError(f"invalid network configuration: {err}", offset=arch_offset) from err

    expected = param_shapes(cfg)
    count_offset = reader.offset
    count = reader.u32("tensor count")
    if count != len(expected):
        raise DataFormatError(f"checkpoint holds {count} tensors, configuration needs {len(expected)}",
                              offset=count_offset)

    params = {}
    for name, shape in expected:
        tensor_offset = reader.offset
        rank = reader.u32(f"{name} rank")
        dims: Tuple[int, ...] = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"{name} dims"))
        if tuple(dims) != shape:
            raise DataFormatError(f"tensor {name} has dims {dims}, expected {shape}", offset=tensor_offset)
        values = reader.array("<f8", int(np.prod(dims)), f"{name} values")
        params[name] = values.astype(np.float64).reshape(dims)

    reader.expect_end()
    return VelocityNet(cfg, params)


def save_checkpoint(path: Union[str, Path], net: VelocityNet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(net))
    return path


def load_checkpoint(path: Union[str, Path]) -> VelocityNet:
    return decode_checkpoint(Path(path).read_bytes())
