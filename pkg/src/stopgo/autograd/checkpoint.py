"""Parameter checkpoints: JSON header followed by little-endian float64 data.

Layout::

    b"SGCKPT01"                 magic
    uint64 little-endian        header length in bytes
    header                      UTF-8 JSON {"tensors": {name: {shape, dtype, offset}}, "meta": {...}}
    payload                     concatenated tensors, C order, offsets relative to payload start
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SGCKPT01"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    tensors, offset = {}, 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        tensors[name] = {"shape": list(arr.shape), "dtype": "<f8", "offset": offset}
        offset += arr.nbytes
    header = json.dumps({"tensors": tensors, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + n])
    payload = memoryview(blob)[16 + n:]
    arrays = {}
    for name, info in header["tensors"].items():
        count = int(np.prod(info["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=info["dtype"], count=count, offset=info["offset"])
        arrays[name] = arr.reshape(info["shape"]).astype(np.float64)
    return arrays, header["meta"]
