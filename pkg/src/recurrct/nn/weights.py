"""Weight files.

Layout: the 5 magic bytes ``RCNN1``, a little-endian uint64 header length,
a UTF-8 JSON header, then the raw little-endian float64 tensors. The header
holds ``layers`` (layer specs), ``tensors`` (name, shape, byte offset into
the data block) and free-form ``meta``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError

MAGIC = b"RCNN1"


def save_weights(path, layers: list[dict], tensors: list[tuple[str, np.ndarray]],
                 meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"layers": layers, "tensors": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_weights(path) -> tuple[list[dict], list[tuple[str, np.ndarray]], dict]:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValidationError(f"{path}: bad magic, not an RCNN1 weight file")
    (hlen,) = struct.unpack("<Q", raw[5:13])
    header = json.loads(raw[13: 13 + hlen].decode("utf-8"))
    data = raw[13 + hlen:]
    tensors = []
    for e in header["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start, stop = e["offset"], e["offset"] + 8 * n
        if stop > len(data):
            raise ValidationError(f"{path}: tensor {e['name']} runs past end of file")
        arr = np.frombuffer(data[start:stop], dtype="<f8").astype(np.float64).reshape(e["shape"])
        tensors.append((e["name"], arr))
    return header["layers"], tensors, header.get("meta", {})
