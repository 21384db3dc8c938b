"""Model checkpoint container.

Binary layout (all integers little-endian):

    magic   4 bytes  b"DRNT"
    version u16      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, then name_len bytes of UTF-8
        rank     u8
        extents  u32 * rank
        payload  float32 little-endian, C order, prod(extents) values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DRNT"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_tensors(path, named: dict[str, np.ndarray]) -> None:
    """Write named float arrays; values are stored as float32."""
    parts = [MAGIC, struct.pack("<HI", VERSION, len(named))]
    for name, arr in named.items():
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape) if a.ndim else b"")
        parts.append(a.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 10
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{rank}I", buf, off) if rank else ()
            off += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(shape)
            off += 4 * n
        except (struct.error, ValueError) as exc:
            raise CheckpointError(f"truncated checkpoint at byte {off}") from exc
        out[name] = arr.copy()
    return out
