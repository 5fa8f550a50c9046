"""MSB-first bit stream writer/reader shared by both codecs."""

from __future__ import annotations

import numpy as np

from .errors import DecodeError


class BitWriter:
    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, nbits: int):
        if nbits == 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._nbits += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            self._out.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def write_bit_array(self, bits: np.ndarray):
        """Append a 0/1 array in order (bulk path for refinement bits)."""
        n = int(bits.size)
        if n == 0:
            return
        packed = np.packbits(bits.astype(np.uint8))
        self.write(int.from_bytes(packed.tobytes(), "big") >> (packed.size * 8 - n), n)

    def align_to_byte(self):
        if self._nbits:
            self.write(0, 8 - self._nbits)

    def tell_bytes(self) -> int:
        """Current byte length; only meaningful when byte-aligned."""
        return len(self._out)

    def getvalue(self) -> bytes:
        if self._nbits:
            pad = 8 - self._nbits
            return bytes(self._out) + bytes([(self._acc << pad) & 0xFF])
        return bytes(self._out)


class BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self._pos = 0

    @property
    def byte_offset(self) -> int:
        return self._pos // 8

    def read_bit(self) -> int:
        if self._pos >= self._bits.size:
            raise DecodeError("bitstream exhausted", byte_offset=self.byte_offset)
        b = int(self._bits[self._pos])
        self._pos += 1
        return b

    def read(self, nbits: int) -> int:
        if self._pos + nbits > self._bits.size:
            raise DecodeError("bitstream exhausted", byte_offset=self.byte_offset)
        v = 0
        for _ in range(nbits):
            v = (v << 1) | int(self._bits[self._pos])
            self._pos += 1
        return v

    def read_bit_array(self, n: int) -> np.ndarray:
        if self._pos + n > self._bits.size:
            raise DecodeError("bitstream exhausted", byte_offset=self.byte_offset)
        out = self._bits[self._pos : self._pos + n]
        self._pos += n
        return out

    def align_to_byte(self):
        self._pos = (self._pos + 7) & ~7

    def tell_bytes(self) -> int:
        return (self._pos + 7) // 8
