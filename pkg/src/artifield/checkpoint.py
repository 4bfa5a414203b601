"""Single-file checkpoint container: JSON header + raw float64 payload.

Layout: magic line, 8-byte little-endian header length, UTF-8 JSON header,
then the concatenated tensors as little-endian float64, row-major.  Round
trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InvalidArgumentError, MissingArtifactError

MAGIC = b"AFCKPT1\n"


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]):
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.astype("<f8", order="C", copy=True).tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"checkpoint not found: {path}") from exc
    with fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise InvalidArgumentError(f"{path} is not an artifield checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return header["meta"], arrays
