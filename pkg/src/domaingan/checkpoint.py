"""Single-file checkpoint container: JSON manifest plus raw tensor blobs.

Layout: 8-byte magic, u32 format version, u64 manifest length, the manifest
(canonical JSON), then tensor bytes concatenated in manifest order. All
tensors are stored little-endian with explicit dtype and shape, so the file
round-trips bitwise (save -> load -> save yields identical bytes) and is
readable without this library.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"DGANCKPT"
FORMAT_VERSION = 1

_DTYPE_TO_TAG = {
    np.dtype(np.float32): "<f4",
    np.dtype(np.float64): "<f8",
    np.dtype(np.int64): "<i8",
    np.dtype(np.int32): "<i4",
    np.dtype(np.uint8): "|u1",
}


def _to_le_array(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    arr = np.asarray(value)
    if arr.dtype not in _DTYPE_TO_TAG:
        raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")
    return np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<"), copy=False))


@dataclass
class Checkpoint:
    """Loaded checkpoint: config snapshot, named tensors, counters, rng state."""

    format_version: int
    step: int
    config: dict
    tensors: dict[str, np.ndarray]
    rng_state: dict | None = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    *,
    step: int,
    config: dict,
    tensors: dict,
    rng_state: dict | None = None,
    meta: dict | None = None,
) -> None:
    arrays = {name: _to_le_array(t) for name, t in tensors.items()}
    records = []
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        nbytes = arr.nbytes
        records.append(
            {
                "name": name,
                "dtype": _DTYPE_TO_TAG[np.dtype(arr.dtype.newbyteorder("="))],
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes
    manifest = {
        "format_version": FORMAT_VERSION,
        "step": int(step),
        # normalize through JSON so a re-save of a loaded checkpoint
        # serializes identically (tuples -> lists, canonical floats)
        "config": json.loads(json.dumps(config)),
        "rng_state": json.loads(json.dumps(rng_state)) if rng_state is not None else None,
        "meta": json.loads(json.dumps(meta or {})),
        "tensors": records,
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for name in sorted(arrays):
            fh.write(arrays[name].tobytes())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header = len(MAGIC) + 4 + 8
    if len(blob) < header or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
        )
    (manifest_len,) = struct.unpack_from("<Q", blob, len(MAGIC) + 4)
    manifest_end = header + manifest_len
    if len(blob) < manifest_end:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[header:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from exc
    tensors = {}
    base = manifest_end
    for rec in manifest["tensors"]:
        start = base + rec["offset"]
        end = start + rec["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated tensor data for '{rec['name']}'")
        arr = np.frombuffer(blob[start:end], dtype=np.dtype(rec["dtype"]))
        tensors[rec["name"]] = arr.reshape(rec["shape"]).astype(
            arr.dtype.newbyteorder("="), copy=True
        )
    return Checkpoint(
        format_version=version,
        step=manifest["step"],
        config=manifest["config"],
        tensors=tensors,
        rng_state=manifest.get("rng_state"),
        meta=manifest.get("meta", {}),
    )
