"""Binary checkpoint container.

Layout: the 8-byte magic "SYMGNN01", then one record per tensor:

    u32  name length, then UTF-8 name bytes
    u32  ndim, then ndim u32 extents
    f32  data, row-major, little-endian

Records cover every learnable parameter plus batch-norm running stats
(named like parameters, e.g. "...bn1.running_mean"). Values are stored as
32-bit floats regardless of the in-memory dtype.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SYMGNN01"


class CheckpointError(ValueError):
    pass


def _records(model):
    for name, p in model.named_parameters():
        yield name if name else p.name, p.tensor.data
    for name, buf in model.named_buffers():
        yield name, buf


def save_checkpoint(model, path):
    """Write all parameters and buffers of `model` to `path`."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in _records(model):
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_records(path):
    """Read a checkpoint into a name -> float32 ndarray map."""
    out = {}
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        while True:
            head = fh.read(4)
            if not head:
                break
            (nlen,) = struct.unpack("<I", head)
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            out[name] = data.copy()
    return out


def _buffer_sites(model, prefix=""):
    """Map dotted buffer name -> (owning module, local key)."""
    sites = {}
    for key in model._buffers:
        sites[f"{prefix}{key}"] = (model, key)
    for key, child in model._children.items():
        sites.update(_buffer_sites(child, f"{prefix}{key}."))
    return sites


def load_checkpoint(model, path):
    """Assign checkpoint records to `model` parameters/buffers by name."""
    records = load_records(path)
    for name, p in model.named_parameters():
        key = name if name else p.name
        if key not in records:
            raise CheckpointError(f"{path}: missing parameter {key!r}")
        arr = records.pop(key)
        if arr.shape != p.tensor.data.shape:
            raise CheckpointError(
                f"{path}: shape {arr.shape} != expected {p.tensor.shape} for {key!r}")
        p.tensor.data = arr.astype(p.tensor.data.dtype)
    for name, (mod, key) in _buffer_sites(model).items():
        if name not in records:
            raise CheckpointError(f"{path}: missing buffer {name!r}")
        mod.set_buffer(key, records.pop(name))
    if records:
        extra = sorted(records)[:3]
        raise CheckpointError(f"{path}: unknown records {extra}")
    return model
