"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        4 bytes   b"LSOT"
    version      uint32    1
    config_hash  32 bytes  SHA-256 of the canonical config text
    count        uint32    number of records
    record * count:
        path_len uint16
        path     path_len bytes, UTF-8
        ndim     uint8
        dims     ndim * uint32
        data     prod(dims) * float32 (little-endian, row-major)

Values are stored as float32, so a float32 model round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LSOT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def config_hash(config_text: str) -> bytes:
    return hashlib.sha256(config_text.encode("utf-8")).digest()


def save_checkpoint(path, state: dict[str, np.ndarray], cfg_hash: bytes = b"\0" * 32) -> None:
    if len(cfg_hash) != 32:
        raise CheckpointError("config hash must be 32 bytes")
    chunks = [MAGIC, struct.pack("<I", VERSION), cfg_hash, struct.pack("<I", len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        key = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(key)) + key)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], bytes]:
    """Return ``(state, config_hash)``; raises :class:`CheckpointError` with a byte offset on damage."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError("bad magic at byte 0")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = take(32)
    (count,) = struct.unpack("<I", take(4))
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (klen,) = struct.unpack("<H", take(2))
        name = take(klen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(dims, dtype=np.int64))
        state[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).copy()
    if pos != len(buf):
        raise CheckpointError(f"trailing bytes after record {count} at byte {pos}")
    return state, cfg
