"""MOVILAT1 binary tensor files.

Layout: the 8-byte magic ``MOVILAT1``, five little-endian u32 (rank, then four
dims), then the row-major payload. Latents use ``<f4``; mask files reuse the
header with a ``u8`` payload and dims ``(objects, T, H, W)`` so that per-object
volumes sit back to back.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SchemaError

MAGIC = b"MOVILAT1"
_HEADER = struct.Struct("<5I")
HEADER_SIZE = len(MAGIC) + _HEADER.size


def encode_tensor(array: np.ndarray, dtype: str = "<f4") -> bytes:
    arr = np.asarray(array)
    if arr.ndim != 4:
        raise SchemaError(f"tensor files hold rank-4 arrays, got shape {arr.shape}")
    header = MAGIC + _HEADER.pack(4, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()


def decode_tensor(blob: bytes) -> np.ndarray:
    """Decode a tensor, inferring ``f32`` or ``u8`` from the payload length."""
    if len(blob) < HEADER_SIZE or blob[: len(MAGIC)] != MAGIC:
        raise SchemaError("not a MOVILAT1 file (bad magic)")
    rank, *dims = _HEADER.unpack_from(blob, len(MAGIC))
    if rank != 4:
        raise SchemaError(f"unsupported tensor rank {rank}")
    count = int(np.prod(dims, dtype=np.int64))
    payload = blob[HEADER_SIZE:]
    if count == 0 and not payload:
        dtype = np.dtype("u1")
    elif len(payload) == 4 * count:
        dtype = np.dtype("<f4")
    elif len(payload) == count:
        dtype = np.dtype("u1")
    else:
        raise SchemaError(f"payload of {len(payload)} bytes does not match dims {tuple(dims)}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array, "<f4"))


def write_masks(path, masks) -> None:
    """Write per-object ``(T, H, W)`` masks as one ``(N, T, H, W)`` u8 tensor."""
    masks = [np.asarray(m, dtype=np.uint8) for m in masks]
    if masks:
        stacked = np.stack(masks)
    else:
        stacked = np.zeros((0, 1, 1, 1), dtype=np.uint8)
    Path(path).write_bytes(encode_tensor(stacked, "u1"))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
