"""Binary tensor container shared by datasets and checkpoints.

Layout of one tensor file: 4-byte magic ``MGTD``, u32 rank, ``rank`` u32
dims, then little-endian float32 data in C order.  Checkpoints store one
file per named tensor plus a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MGTD"


class CorruptTensorError(RuntimeError):
    """Raised when a tensor file fails structural or checksum validation."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CorruptTensorError(f"{path}: missing MGTD magic")
    (rank,) = struct.unpack_from("<I", raw, 4)
    header_end = 8 + 4 * rank
    if len(raw) < header_end:
        raise CorruptTensorError(f"{path}: truncated shape header")
    shape = struct.unpack_from(f"<{rank}I", raw, 8)
    expected = header_end + 4 * int(np.prod(shape, dtype=np.int64))
    if len(raw) != expected:
        raise CorruptTensorError(
            f"{path}: payload is {len(raw)} bytes, header implies {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=header_end)
    return data.reshape(shape).copy()


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def git_blob_sha(path: str | Path) -> str:
    """Content hash in git blob form: sha1 over ``blob <len>\\0<content>``."""
    content = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\x00" % len(content) + content).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_named_tensors(directory: str | Path, tensors: dict[str, np.ndarray]) -> dict[str, str]:
    """Write one MGTD file per named tensor; returns name -> relative file map."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index: dict[str, str] = {}
    for i, name in enumerate(sorted(tensors)):
        rel = f"t{i:04d}.bin"
        write_tensor(directory / rel, tensors[name])
        index[name] = rel
    return index


def read_named_tensors(directory: str | Path, index: dict[str, str]) -> dict[str, np.ndarray]:
    directory = Path(directory)
    return {name: read_tensor(directory / rel) for name, rel in index.items()}
