"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic      4 bytes  b"TSIT"
    version    u32
    meta_len   u32      followed by meta_len bytes of UTF-8 JSON
                        (net config, step, optimizer step counts, RNG state, ...)
    count      u32      number of tensors, then per tensor:
        name_len u16, name (UTF-8)
        dtype    u8     (0 = float32, 1 = float64)
        ndim     u8, dims u32 * ndim
        data     product(dims) * itemsize bytes, row-major little-endian
    crc32      u32      over every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"TSIT"
FORMAT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i4"): 2, np.dtype("<i8"): 3,
                np.dtype("|u1"): 4}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class CheckpointError(Exception):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def net_config(self) -> dict:
        return self.meta.get("net_config", {})


def encode_checkpoint(meta: dict, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts += [struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_CODES:
            raise TypeError(f"tensor {name}: unsupported dtype {arr.dtype}")
        if arr.ndim > 255:
            raise ValueError(f"tensor {name}: too many dimensions")
        name_bytes = name.encode()
        parts.append(struct.pack("<H", len(name_bytes)) + name_bytes)
        parts.append(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError(
                f"truncated checkpoint: need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CorruptCheckpointError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"unreadable metadata: {exc}") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode(errors="replace")
        code, ndim = r.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CorruptCheckpointError(f"tensor {name}: unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}I")
        dt = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        data = np.frombuffer(r.take(nbytes), dtype=dt).reshape(shape)
        tensors[name] = data.astype(dt.newbyteorder("="), copy=True)
    body_end = r.pos
    (crc,) = r.unpack("<I")
    if r.pos != len(buf):
        raise CorruptCheckpointError(f"{len(buf) - r.pos} trailing bytes after checkpoint")
    if zlib.crc32(buf[:body_end]) != crc:
        raise CorruptCheckpointError("checksum mismatch")
    return Checkpoint(meta=meta, tensors=tensors, version=version)


def save_checkpoint(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(meta, tensors))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
