"""Checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"P2PCKPT1"
    8 bytes   uint64 header length N
    N bytes   UTF-8 JSON header: {"meta": {...}, "tensors": [
                  {"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    ...       raw little-endian IEEE-754 arrays, C order, at the given offsets
              (relative to the end of the header)

The header is written with sorted keys and no timestamps, so identical
parameters and metadata give byte-identical files.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"P2PCKPT1"


def save_checkpoint(path, tensors, meta=None):
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes(order="C")
        entries.append(
            {"name": name, "dtype": le.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Return (ordered dict name -> array, meta dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a p2ptrack checkpoint")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + n].decode())
    base = 16 + n
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(blob, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)), offset=start)
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    return tensors, header["meta"]
