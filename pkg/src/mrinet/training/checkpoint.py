"""Checkpoint file format.

Layout::

    <uint64 little-endian: manifest length in bytes>
    <manifest: UTF-8 JSON, sorted keys, no whitespace>
    <blob: little-endian float32 tensors concatenated in manifest order>

Manifest tensor entries are ordered by kind (param, state, adam_m, adam_v)
and then by name, so saving the same graph twice yields identical bytes.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

FORMAT_VERSION = 1
KINDS = ("param", "state", "adam_m", "adam_v")
_LE_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def params(self):
        return self.tensors.get("param", {})

    @property
    def state(self):
        return self.tensors.get("state", {})

    @property
    def config(self):
        return self.manifest.get("config") or {}


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_checkpoint(tensors: dict[str, dict[str, np.ndarray]], meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for kind in KINDS:
        for name in sorted(tensors.get(kind, {})):
            arr = np.ascontiguousarray(tensors[kind][name], dtype=_LE_F32)
            raw = arr.tobytes()
            entries.append({"kind": kind, "name": name, "offset": offset, "shape": list(arr.shape)})
            chunks.append(raw)
            offset += len(raw)
    blob = b"".join(chunks)
    manifest = dict(meta or {})
    manifest.update(
        format_version=FORMAT_VERSION,
        tensors=entries,
        blob_bytes=len(blob),
        blob_crc32=zlib.crc32(blob),
    )
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return struct.pack("<Q", len(text)) + text + blob


def decode_checkpoint(data: bytes, source="<bytes>") -> Checkpoint:
    if len(data) < 8:
        raise CheckpointError(f"{source}: truncated header")
    (n,) = struct.unpack("<Q", data[:8])
    if 8 + n > len(data):
        raise CheckpointError(f"{source}: manifest length {n} exceeds file size")
    try:
        manifest = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: corrupt manifest ({exc})") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: format version {version!r}, expected {FORMAT_VERSION}")
    blob = data[8 + n :]
    if len(blob) != manifest.get("blob_bytes") or zlib.crc32(blob) != manifest.get("blob_crc32"):
        raise CheckpointError(f"{source}: weight blob is corrupt or truncated")
    tensors: dict[str, dict[str, np.ndarray]] = {k: {} for k in KINDS}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = e["offset"]
        end = start + 4 * count
        if e["kind"] not in tensors or end > len(blob):
            raise CheckpointError(f"{source}: bad tensor entry {e['name']!r}")
        arr = np.frombuffer(blob, dtype=_LE_F32, count=count, offset=start).reshape(e["shape"])
        tensors[e["kind"]][e["name"]] = arr.astype(np.float32)
    return Checkpoint(manifest, tensors)


def read_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode_checkpoint(data, str(path))


def read_tensors(path) -> dict[str, np.ndarray]:
    """Parameters and running statistics from a checkpoint, keyed by slot name."""
    ckpt = read_checkpoint(path)
    return {**ckpt.params, **ckpt.state}


def save_checkpoint(path, graph, adam_state=None, meta: dict | None = None) -> None:
    tensors = {"param": graph.params, "state": graph.state}
    meta = dict(meta or {})
    meta.setdefault("model", graph.name)
    if adam_state is not None:
        tensors["adam_m"] = adam_state.m
        tensors["adam_v"] = adam_state.v
        meta["adam_step"] = adam_state.t
    atomic_write_bytes(path, encode_checkpoint(tensors, meta))


def load_checkpoint(path) -> Checkpoint:
    return read_checkpoint(path)


def apply_checkpoint(graph, ckpt: Checkpoint) -> None:
    """Copy parameters and running statistics into ``graph``.

    Everything is validated first; a mismatch raises naming the first
    offending slot (in sorted order) and the graph is left untouched.
    """
    for kind, table in (("param", graph.params), ("state", graph.state)):
        stored = ckpt.tensors.get(kind, {})
        for name in sorted(set(table) | set(stored)):
            if name not in stored:
                raise CheckpointError(f"checkpoint lacks {kind} slot {name!r}")
            if name not in table:
                raise CheckpointError(f"checkpoint has unknown {kind} slot {name!r}")
            if stored[name].shape != table[name].shape:
                raise CheckpointError(
                    f"shape mismatch at {kind} slot {name!r}: checkpoint {stored[name].shape}, "
                    f"model {table[name].shape}"
                )
    for name, value in ckpt.params.items():
        graph.params[name] = value.astype(graph.params[name].dtype)
    for name, value in ckpt.state.items():
        graph.state[name] = value.astype(graph.state[name].dtype)
