"""Named-tensor container shared by checkpoints, teacher files and datasets.

Layout (all integers little-endian)::

    magic[4] | u32 version | u32 header_len | header JSON | payloads | u32 crc32

The header holds ``{"config": ..., "tensors": [{"name", "dtype", "shape"}, ...]}``
and payloads follow in directory order. The CRC covers every preceding byte.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import BadMagic, ChecksumMismatch, ContainerIOError, VersionMismatch

VERSION = 1
MAGICS = {
    "checkpoint": b"LCKP",
    "teacher": b"LCTE",
    "dataset": b"LCDS",
    "embeddings": b"LCEM",
}
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4")}
_CODE_OF = {np.dtype(v).str: k for k, v in DTYPE_CODES.items()}


def _dtype_code(arr: np.ndarray) -> int:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    try:
        return _CODE_OF[np.dtype(dt).str]
    except KeyError:
        raise TypeError(f"unsupported tensor dtype {arr.dtype}; use float32, float64 or int32") from None


def encode_container(magic: bytes, tensors: dict, config=None) -> bytes:
    names, blobs = [], []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _dtype_code(arr)
        names.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes())
    header = json.dumps({"config": config, "tensors": names}, sort_keys=True).encode("utf-8")
    body = magic + struct.pack("<II", VERSION, len(header)) + header + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_container(blob: bytes, magic: bytes | None = None) -> tuple[dict, dict]:
    """Returns ``(tensors, config)``; raises on bad magic, version or checksum."""
    if len(blob) < 16:
        raise ChecksumMismatch("file is too short to be a container")
    if magic is not None and blob[:4] != magic:
        raise BadMagic(f"expected magic {magic!r}, found {blob[:4]!r}")
    if magic is None and blob[:4] not in MAGICS.values():
        raise BadMagic(f"unknown magic {blob[:4]!r}")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch("CRC32 does not match contents")
    version, header_len = struct.unpack("<II", body[4:12])
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    header = json.loads(body[12:12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    tensors = {}
    for entry in header["tensors"]:
        dt = DTYPE_CODES[entry["dtype"]]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        arr = np.frombuffer(body, dtype=dt, count=count, offset=offset).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
        offset += nbytes
    if offset != len(body):
        raise ChecksumMismatch("payload size does not match the tensor directory")
    return tensors, header["config"]


def write_container(path, magic: bytes, tensors: dict, config=None) -> Path:
    path = Path(path)
    data = encode_container(magic, tensors, config)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise ContainerIOError(f"cannot write {path}: {exc}") from exc
    return path


def read_container(path, magic: bytes | None = None) -> tuple[dict, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerIOError(f"cannot read {path}: {exc}") from exc
    return decode_container(blob, magic)


def peek_magic(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read(4)
    except OSError as exc:
        raise ContainerIOError(f"cannot read {path}: {exc}") from exc
