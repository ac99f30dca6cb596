"""Little-endian byte reader shared by the checkpoint and dataset formats."""

import struct

import numpy as np

from wow_flow.errors import DataFormatError

__all__ = ["ByteReader"]


class ByteReader:
    """Sequential reader over a byte string; failures report the byte offset reached."""

    def __init__(self, payload: bytes, kind: str):
        self.payload = payload
        self.kind = kind
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.payload) - self.offset

    def take(self, size: int, what: str) -> bytes:
        if size > self.remaining:
            raise DataFormatError(
                f"truncated {self.kind} reading {what}: expected {size} bytes, found {self.remaining}",
                offset=self.offset,
            )
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        width = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(width * count, what), dtype=dtype).copy()

    def expect_end(self) -> None:
        if self.remaining:
            raise DataFormatError(f"{self.remaining} trailing bytes in {self.kind}", offset=self.offset)
