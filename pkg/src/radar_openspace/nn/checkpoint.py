"""Checkpoint container: named tensors + metadata, bit-exact round trip.

Same framing discipline as the RSEG dataset container: magic, u16 version,
little-endian, length-prefixed records. Stores parameter values, optimizer
buffers, batch-norm running statistics and a key=value metadata block.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RSGC"
VERSION = 1

_DTYPE_IDS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<u1"): 2}
_DTYPES = {v: k for k, v in _DTYPE_IDS.items()}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                    metadata: dict[str, str]) -> None:
    chunks = [MAGIC, struct.pack("<H", VERSION)]
    meta_text = "\n".join(f"{k}={v}" for k, v in sorted(metadata.items()))
    meta_bytes = meta_text.encode()
    chunks.append(struct.pack("<I", len(meta_bytes)))
    chunks.append(meta_bytes)
    chunks.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if np.dtype(arr.dtype) not in _DTYPE_IDS:
            raise CheckpointError(f"unsupported checkpoint dtype {arr.dtype}")
        nb = name.encode()
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", _DTYPE_IDS[np.dtype(arr.dtype)], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"checkpoint truncated at byte {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", take(4))
    metadata = {}
    for line in take(meta_len).decode().splitlines():
        k, _, v = line.partition("=")
        metadata[k] = v
    (n_tensors,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        dtype_id, ndim = struct.unpack("<BB", take(2))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        nb = int(np.prod(dims, dtype=np.int64)) * _DTYPES[dtype_id].itemsize
        tensors[name] = np.frombuffer(take(nb), dtype=_DTYPES[dtype_id]).reshape(dims).copy()
    return tensors, metadata
