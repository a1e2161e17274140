"""Little-endian byte writer/reader with LEB128 varints."""

from __future__ import annotations

import struct


class TruncatedError(ValueError):
    pass


class ByteWriter:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, v: int) -> "ByteWriter":
        self.buf.append(v & 0xFF)
        return self

    def varint(self, v: int) -> "ByteWriter":
        if v < 0:
            raise ValueError("varint must be non-negative")
        while True:
            byte = v & 0x7F
            v >>= 7
            if v:
                self.buf.append(byte | 0x80)
            else:
                self.buf.append(byte)
                return self

    def f32(self, v: float) -> "ByteWriter":
        self.buf += struct.pack("<f", v)
        return self

    def f64(self, v: float) -> "ByteWriter":
        self.buf += struct.pack("<d", v)
        return self

    def raw(self, b: bytes) -> "ByteWriter":
        self.buf += b
        return self

    def section(self, b: bytes) -> "ByteWriter":
        return self.varint(len(b)).raw(b)

    def getvalue(self) -> bytes:
        return bytes(self.buf)


class ByteReader:
    def __init__(self, data: bytes, what: str = "stream"):
        self.data = memoryview(bytes(data))
        self.pos = 0
        self.what = what

    def _take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise TruncatedError(f"{self.what} truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def varint(self) -> int:
        v = 0
        shift = 0
        while True:
            b = self.u8()
            v |= (b & 0x7F) << shift
            if not b & 0x80:
                return v
            shift += 7
            if shift > 63:
                raise ValueError(f"{self.what}: varint too long at byte {self.pos}")

    def f32(self) -> float:
        return struct.unpack("<f", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return bytes(self._take(n))

    def section(self) -> bytes:
        return self.raw(self.varint())

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos
