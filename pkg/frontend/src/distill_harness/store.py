"""Writer/reader for the engine's binary weight-store format.

Independent implementation of the shared wire format: magic "HEWS1\\n",
uint64 LE header length, canonical JSON header (format version,
architecture descriptor, activation scales, tensor index sorted by name),
float64 little-endian row-major payload, trailing SHA-256 over everything
before it.  Canonical JSON keeps export -> import -> re-export
byte-identical across both implementations.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

MAGIC = b"HEWS1\n"
FORMAT_VERSION = 1


def write_store(path, architecture, tensors, scales):
    blob = store_bytes(architecture, tensors, scales)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


def store_bytes(architecture, tensors, scales):
    names = sorted(tensors)
    index = []
    payload = bytearray()
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture,
        "scales": {k: float(v) for k, v in scales.items()},
        "tensors": index,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + len(head).to_bytes(8, "little") + head + bytes(payload)
    return body + hashlib.sha256(body).digest()


def read_store(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("not a weight store file (bad magic)")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError("weight store checksum mismatch")
    head_len = int.from_bytes(body[len(MAGIC) : len(MAGIC) + 8], "little")
    start = len(MAGIC) + 8
    header = json.loads(body[start : start + head_len])
    payload = body[start + head_len :]
    tensors = {}
    for ent in header["tensors"]:
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        buf = payload[ent["offset"] : ent["offset"] + count * 8]
        tensors[ent["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["architecture"], tensors, header["scales"]
