"""Binary checkpoint format.

Layout (little-endian)::

    b"CTCK"  u32 version  u32 d  u32 blocks  u64 seed
    repeated until EOF:
        u16 name_len  name (utf-8)  u8 rank  u32 extents[rank]  f32 data[prod(extents)]
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CTCK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, arrays: dict, d: int, blocks: int, seed: int, version: int = VERSION) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version, d, blocks, seed))
        for name, arr in arrays.items():
            arr = np.array(arr, dtype="<f4", order="C")  # keeps rank 0, unlike ascontiguousarray
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path) -> tuple[dict, dict]:
    """Returns ``(header, arrays)``; arrays come back as float32."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size or buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a CTCK checkpoint")
    _, version, d, blocks, seed = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = _HEADER.size
    arrays = {}
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * count > len(buf):
                raise CheckpointError(f"{path}: truncated array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * count
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return {"version": version, "d": d, "blocks": blocks, "seed": seed}, arrays
