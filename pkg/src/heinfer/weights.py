"""Weight store: named float64 tensors plus architecture and scales.

Binary container shared with the training harness:

    magic "HEWS1\\n" | uint64 LE header length | canonical-JSON header
    | raw tensor payload (float64 little-endian, row-major, in header order)
    | sha256 of everything before it

The header carries the format version, the architecture descriptor, the
per-site activation scales, and the tensor index (name, shape, offset).
Canonical JSON (sorted keys, no whitespace) makes export -> import ->
re-export byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from . import models

MAGIC = b"HEWS1\n"
FORMAT_VERSION = 1


@dataclass
class WeightStore:
    architecture: dict
    tensors: dict
    scales: dict
    format_version: int = FORMAT_VERSION

    def spec(self):
        return models.spec_from_descriptor(self.architecture)

    def tensor(self, name):
        if name not in self.tensors:
            raise ConfigError(f"weight store is missing tensor {name!r}")
        return self.tensors[name]

    def scale(self, site):
        if site not in self.scales:
            raise ConfigError(f"weight store is missing activation scale {site!r}")
        return float(self.scales[site])

    def validate(self):
        """Every tensor named by the architecture present with matching shape."""
        spec = self.spec()
        expected = models.tensor_shapes(spec)
        for name, shape in expected.items():
            arr = self.tensor(name)
            if tuple(arr.shape) != tuple(shape):
                raise ShapeError(
                    f"tensor {name!r} has shape {tuple(arr.shape)}, expected {tuple(shape)}"
                )
        for site in models.scale_sites(spec):
            if self.scale(site) <= 0:
                raise ConfigError(f"activation scale for {site!r} must be positive")
        return spec

    # ---- serialization ---------------------------------------------------

    def to_bytes(self):
        names = sorted(self.tensors)
        index = []
        payload = bytearray()
        for name in names:
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f8")
            index.append(
                {"name": name, "shape": list(arr.shape), "offset": len(payload)}
            )
            payload.extend(arr.tobytes())
        header = {
            "format_version": self.format_version,
            "architecture": self.architecture,
            "scales": {k: float(v) for k, v in self.scales.items()},
            "tensors": index,
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        body = MAGIC + len(head).to_bytes(8, "little") + head + bytes(payload)
        return body + hashlib.sha256(body).digest()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < len(MAGIC) + 8 + 32 or blob[: len(MAGIC)] != MAGIC:
            raise ConfigError("not a weight store file (bad magic)")
        body, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise ConfigError("weight store checksum mismatch (corrupted file)")
        head_len = int.from_bytes(body[len(MAGIC) : len(MAGIC) + 8], "little")
        head_start = len(MAGIC) + 8
        try:
            header = json.loads(body[head_start : head_start + head_len])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"weight store header is not valid JSON: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported format version {header.get('format_version')}")
        payload = body[head_start + head_len :]
        tensors = {}
        for ent in header["tensors"]:
            shape = tuple(ent["shape"])
            count = int(np.prod(shape)) if shape else 1
            off = ent["offset"]
            buf = payload[off : off + count * 8]
            if len(buf) != count * 8:
                raise ConfigError(f"tensor {ent['name']!r} payload truncated")
            tensors[ent["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        return cls(
            architecture=header["architecture"],
            tensors=tensors,
            scales={k: float(v) for k, v in header["scales"].items()},
            format_version=header["format_version"],
        )

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
