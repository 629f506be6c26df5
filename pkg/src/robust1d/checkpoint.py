"""Binary checkpoint files: magic "MDF1", then named float64 array records."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MDF1"
VERSION = 1
_U32 = struct.Struct("<I")


def save_checkpoint(path, named: dict[str, np.ndarray]) -> None:
    """Write records in sorted-name order: name, rank, dims, little-endian f64 payload."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        for name in sorted(named):
            arr = np.asarray(named[name], dtype=np.float64, order="C")
            raw = name.encode("utf-8")
            fh.write(_U32.pack(len(raw)))
            fh.write(raw)
            fh.write(_U32.pack(arr.ndim))
            for dim in arr.shape:
                fh.write(_U32.pack(dim))
            fh.write(arr.astype("<f8").tobytes(order="C"))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read records in any order; truncation or a bad magic is a format error."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic {blob[:4]!r})")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (version,) = _U32.unpack_from(blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 8
    total = len(blob)

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > total:
            raise FormatError(f"{path}: truncated record at byte {offset}")
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    while offset < total:
        (name_len,) = _U32.unpack(take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = _U32.unpack(take(4))
        dims = [(_U32.unpack(take(4)))[0] for _ in range(rank)]
        count = int(np.prod(dims)) if dims else 1
        payload = take(8 * count)
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
        if name in out:
            raise FormatError(f"{path}: duplicate record {name!r}")
        out[name] = arr
    return out
