"""Binary container files: magic, u32 version, u64 header length, UTF-8 JSON
header, then raw little-endian float64 arrays in header-declared order.

The same layout backs dataset files (magic EGNODSET) and checkpoints
(magic EGNOCKPT). Headers are serialized canonically (sorted keys, no
whitespace), so identical content yields identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "ContainerError",
    "DATASET_MAGIC",
    "CHECKPOINT_MAGIC",
    "FORMAT_VERSION",
    "write_container",
    "read_container",
]

DATASET_MAGIC = b"EGNODSET"
CHECKPOINT_MAGIC = b"EGNOCKPT"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed or mismatched container file."""


def write_container(path: str | Path, magic: bytes, header: dict,
                    arrays: dict[str, np.ndarray], version: int = FORMAT_VERSION) -> None:
    """Write header plus arrays; records array names and shapes in the header."""
    header = dict(header)
    header["arrays"] = [{"name": name, "shape": list(arr.shape)}
                        for name, arr in arrays.items()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", version))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path: str | Path, magic: bytes,
                   version: int = FORMAT_VERSION) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and validate a container; returns (header, arrays by name)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(magic) + 12:
        raise ContainerError(f"{path}: truncated before header, only {len(raw)} bytes")
    if raw[:len(magic)] != magic:
        raise ContainerError(
            f"{path}: bad magic {raw[:len(magic)]!r}, expected {magic!r}")
    offset = len(magic)
    (found_version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if found_version != version:
        raise ContainerError(
            f"{path}: format version {found_version}, this build reads version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise ContainerError(
            f"{path}: header of {header_len} bytes exceeds file size at byte {offset}")
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: header is not valid JSON ({exc})") from exc
    offset += header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + nbytes > len(raw):
            raise ContainerError(
                f"{path}: payload for array '{entry['name']}' truncated at byte {offset}")
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise ContainerError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return header, arrays
