"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"ACRCKPT\\0"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length H in bytes
    offset 20  H bytes   UTF-8 JSON header, keys sorted, no whitespace
    offset 20+H          payload: float64 little-endian blocks, back to back

The header holds ``architecture`` (free-form JSON), ``meta`` (free-form
JSON), ``rng`` (generator state or null) and ``blocks``: a list of
``{"name", "shape", "offset", "count"}`` where ``offset`` counts bytes from
the start of the payload. Block names are prefixed by their role:
``param/``, ``buffer/``, ``adam_m/``, ``adam_v/`` or ``extra/``. Values are
stored row-major. Nothing time- or host-dependent is written, so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ACRCKPT\0"
VERSION = 1


def dumps(blocks: dict, architecture: dict, meta: dict | None = None, rng=None) -> bytes:
    entries = []
    payload = []
    offset = 0
    for name in blocks:
        arr = np.ascontiguousarray(np.asarray(blocks[name], dtype="<f8"))
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "count": int(arr.size)})
        payload.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    header = {"format_version": VERSION, "architecture": architecture, "meta": meta or {},
              "rng": rng, "blocks": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(payload)


def loads(data: bytes):
    """Inverse of :func:`dumps`: ``(blocks, architecture, meta, rng)``."""
    if data[:8] != MAGIC:
        raise ValueError("not a checkpoint file")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    blocks = {}
    for e in header["blocks"]:
        start = base + e["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=e["count"], offset=start)
        blocks[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    return blocks, header["architecture"], header["meta"], header["rng"]


def save(path, blocks, architecture, meta=None, rng=None) -> None:
    Path(path).write_bytes(dumps(blocks, architecture, meta, rng))


def load(path):
    return loads(Path(path).read_bytes())
