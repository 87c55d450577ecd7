"""Little-endian record packing shared by the NCMF/NCMP/NCMH file formats.

Layout of every file: 4-byte magic, u16 version, body, u32 CRC32 of all
preceding bytes.
"""
import struct
import zlib

import numpy as np

from .errors import DataFormatError


class Writer:
    def __init__(self, magic: bytes, version: int):
        self._parts = [magic, struct.pack("<H", version)]

    def u32(self, value):
        self._parts.append(struct.pack("<I", value))

    def i64(self, value):
        self._parts.append(struct.pack("<q", value))

    def string(self, text):
        raw = text.encode("utf-8")
        self.u32(len(raw))
        self._parts.append(raw)

    def array(self, arr, dtype):
        self._parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        body = b"".join(self._parts)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class Reader:
    def __init__(self, data: bytes, magic: bytes, versions, what="file"):
        self.what = what
        if len(data) < len(magic) + 2 + 4:
            raise DataFormatError(f"{what}: truncated header")
        if data[:4] != magic:
            raise DataFormatError(f"{what}: bad magic {data[:4]!r}, expected {magic!r}")
        (stored,) = struct.unpack("<I", data[-4:])
        if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored:
            raise DataFormatError(f"{what}: checksum mismatch (truncated or corrupt payload)")
        self._buf = memoryview(data)[:-4]
        self._pos = 4
        (self.version,) = self._unpack("<H")
        if self.version not in versions:
            raise DataFormatError(f"{what}: unsupported format version {self.version}")

    def _take(self, size):
        if self._pos + size > len(self._buf):
            raise DataFormatError(f"{self.what}: truncated payload")
        chunk = self._buf[self._pos:self._pos + size]
        self._pos += size
        return chunk

    def _unpack(self, fmt):
        return struct.unpack(fmt, self._take(struct.calcsize(fmt)))

    def u32(self):
        return self._unpack("<I")[0]

    def i64(self):
        return self._unpack("<q")[0]

    def string(self):
        size = self.u32()
        try:
            return bytes(self._take(size)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"{self.what}: invalid UTF-8 string") from exc

    def array(self, dtype, shape):
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        raw = self._take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    def finish(self):
        if self._pos != len(self._buf):
            raise DataFormatError(f"{self.what}: {len(self._buf) - self._pos} trailing bytes")
