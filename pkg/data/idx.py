"""
Reader for IDX ubyte image files (the MNIST/USPS distribution format).

Image file layout, big-endian::

    [offset] [type]          [value]
    0000     32 bit integer  0x00000803 magic number
    0004     32 bit integer  image count
    0008     32 bit integer  rows
    0012     32 bit integer  columns
    0016     unsigned byte   pixels, image-major then row-major

Files ending in ``.gz`` are decompressed transparently.
"""

import gzip
import struct
from pathlib import Path
from typing import Union

import numpy as np

from wow_flow.errors import DataFormatError

__all__ = ["IDX_IMAGE_MAGIC", "read_idx", "parse_idx", "encode_idx"]

IDX_IMAGE_MAGIC = 0x00000803
_HEADER = struct.Struct(">IIII")


def parse_idx(payload: bytes) -> np.ndarray:
    """
    Parse IDX image bytes.

    Returns:
        np.ndarray: float64 array of shape (count, rows, cols) scaled to [0, 1].

    Raises:
        DataFormatError: On a short header, a wrong magic number or a truncated payload.
    """
    if len(payload) < _HEADER.size:
        raise DataFormatError(
            f"truncated IDX header: expected {_HEADER.size} bytes, got {len(payload)}", offset=len(payload)
        )
    magic, count, rows, cols = _HEADER.unpack_from(payload, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", offset=0)

    expected = count * rows * cols
    actual = len(payload) - _HEADER.size
    if actual < expected:
        raise DataFormatError(
            f"truncated IDX payload: expected {expected} pixel bytes, got {actual}", offset=len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8, count=expected, offset=_HEADER.size)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def read_idx(path: Union[str, Path]) -> np.ndarray:
    """Read an IDX image file (optionally gzip-compressed) into a (count, rows, cols) array."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_idx(fh.read())


def encode_idx(images: np.ndarray) -> bytes:
    """Encode a (count, rows, cols) array of bytes or [0, 1] floats as an IDX image file."""
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError(f"images must have shape (count, rows, cols), got {images.shape}")
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    return _HEADER.pack(IDX_IMAGE_MAGIC, *images.shape) + images.tobytes(order="C")
