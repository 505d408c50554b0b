"""Checkpoint persistence: a JSON manifest plus a raw little-endian float32 blob.

`<prefix>.json` holds the format version, full config (element table included),
bookkeeping extras, and the tensor index (name, shape, offset in float32
elements, in blob order). `<prefix>.bin` holds the concatenated tensor data.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import TrainConfig
from .errors import CorruptBlob, VersionMismatch
from .model import FlowModel, build_model

FORMAT_VERSION = 1


def _tensor_entries(model: FlowModel, optim_arrays: dict[str, np.ndarray] | None):
    entries = []
    for name, p in model.named_parameters():
        entries.append((f"param.{name}", p.data))
    for name, b in model.named_buffers():
        entries.append((f"buf.{name}", b))
    if optim_arrays:
        for name, arr in optim_arrays.items():
            entries.append((name, arr))
    return entries


def save_checkpoint(prefix: str, model: FlowModel, cfg: TrainConfig, extra: dict,
                    optim_arrays: dict[str, np.ndarray] | None = None) -> None:
    entries = _tensor_entries(model, optim_arrays)
    index = []
    offset = 0
    chunks = []
    for name, arr in entries:
        arr = np.asarray(arr)
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        chunks.append(flat)
        offset += flat.size
    manifest = {
        "version": FORMAT_VERSION,
        "config": cfg.to_json(),
        "extra": extra,
        "tensors": index,
        "total_floats": offset,
    }
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    with open(prefix + ".bin", "wb") as fh:
        fh.write(np.concatenate(chunks).tobytes() if chunks else b"")


def load_checkpoint(prefix: str) -> tuple[FlowModel, TrainConfig, dict]:
    """Rebuild the model from a checkpoint pair; returns (model, cfg, extra).

    extra carries the manifest extras plus `optim_arrays` for resuming."""
    with open(prefix + ".json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint version {manifest.get('version')} != {FORMAT_VERSION}")
    cfg = TrainConfig.from_json(manifest["config"])
    expected = int(manifest["total_floats"])
    blob_path = prefix + ".bin"
    size = os.path.getsize(blob_path)
    if size != expected * 4:
        raise CorruptBlob(f"blob holds {size} bytes, expected {expected * 4}")
    flat = np.fromfile(blob_path, dtype="<f4")
    if flat.size != expected:
        raise CorruptBlob(f"blob holds {flat.size} floats, expected {expected}")

    model = build_model(cfg)
    params = {f"param.{name}": p for name, p in model.named_parameters()}
    buffers = {f"buf.{name}": b for name, b in model.named_buffers()}
    optim_arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        size = int(np.prod(shape)) if shape else 1
        arr = flat[offset : offset + size].reshape(shape)
        if name in params:
            p = params[name]
            p.data = arr.astype(p.data.dtype).reshape(p.data.shape)
        elif name in buffers:
            buf = buffers[name]
            buf[...] = arr.astype(buf.dtype).reshape(buf.shape)
        elif name.startswith("optim."):
            optim_arrays[name] = arr
        else:
            raise CorruptBlob(f"manifest names unknown tensor {name!r}")
    extra = dict(manifest["extra"])
    extra["optim_arrays"] = optim_arrays
    return model, cfg, extra
