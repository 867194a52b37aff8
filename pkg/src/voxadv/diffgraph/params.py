"""Named parameter collections and a versioned binary checkpoint format.

Checkpoint layout: an 8-byte magic+version header, a little-endian uint64 JSON
length, a JSON metadata block (entry names, shapes, trainable flags, blob
offsets, plus caller-supplied extra config), then the raw float32 blobs in
row-major order. Values are stored as float32 regardless of compute dtype;
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .tensor import Tensor

_MAGIC = b"VXAD"
_FORMAT_VERSION = 1


class Parameters:
    """Ordered name -> leaf Tensor map with per-entry trainable flags.

    Trainable entries receive gradients during backward; untrainable entries
    (running statistics, constants) never do. ``set_grad_enabled(False)``
    temporarily freezes the trainable entries too, which is how attack loops
    avoid paying for weight gradients they never read.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}
        self._grad_enabled = True

    def add(self, name, array, trainable=True):
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64),
                   requires_grad=trainable and self._grad_enabled, op=f"param:{name}")
        self._tensors[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name):
        return self._trainable[name]

    def trainable_items(self):
        return [(n, t) for n, t in self._tensors.items() if self._trainable[n]]

    def n_scalars(self, trainable_only=True):
        return sum(t.data.size for n, t in self._tensors.items()
                   if self._trainable[n] or not trainable_only)

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def set_grad_enabled(self, flag):
        self._grad_enabled = bool(flag)
        for name, t in self._tensors.items():
            t.requires_grad = self._trainable[name] and self._grad_enabled

    @property
    def grad_enabled(self):
        return self._grad_enabled


def save_checkpoint(params, path, extra=None):
    """Serialize a Parameters object (and optional JSON-safe extra dict)."""
    entries = []
    blobs = []
    offset = 0
    for name, tensor in params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "trainable": params.is_trainable(name),
            "offset": offset,
            "nbytes": arr.nbytes,
        })
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    meta = {
        "format_version": _FORMAT_VERSION,
        "entries": entries,
        "extra": extra if extra is not None else {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        for blob in blobs:
            fh.write(blob)


def checkpoint_meta(path):
    """Read only a checkpoint's extra-metadata dict, skipping the weights."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
    return meta.get("extra", {})


def load_checkpoint(path):
    """Read a checkpoint; returns (Parameters, extra dict).

    Rejects files with the wrong magic or an unknown format version. Loaded
    values are float32 exact, upcast to float64 for compute.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        blob = fh.read()
    params = Parameters()
    for entry in meta["entries"]:
        start = entry["offset"]
        raw = blob[start:start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).astype(np.float64)
        params.add(entry["name"], arr, trainable=entry["trainable"])
    return params, meta.get("extra", {})
