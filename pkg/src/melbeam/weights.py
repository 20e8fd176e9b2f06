"""Flat binary container for named real tensors.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then raw tensor bytes. The header carries a mandatory format version and a
manifest of (name, shape, dtype, byte offset) entries; offsets are relative
to the start of the data section. Tensors are stored sorted by name so that
identical contents produce identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError

_MAGIC = b"MELBWTB1"
_VERSION = 1
_DTYPES = {"float32": np.float32, "float64": np.float64}


class WeightBundle(dict):
    """Mapping of tensor name -> real ndarray, with binary save/load."""

    version = _VERSION

    def save(self, path) -> None:
        names = sorted(self.keys())
        manifest = []
        offset = 0
        blobs = []
        for name in names:
            arr = np.ascontiguousarray(self[name])
            if arr.dtype not in (np.float32, np.float64):
                raise DataError(f"tensor {name!r} must be float32/float64, got {arr.dtype}")
            blob = arr.tobytes()
            manifest.append(
                {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype), "offset": offset}
            )
            blobs.append(blob)
            offset += len(blob)
        header = json.dumps(
            {"version": _VERSION, "tensors": manifest}, sort_keys=True, separators=(",", ":")
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)

    @classmethod
    def load(cls, path) -> "WeightBundle":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[: len(_MAGIC)] != _MAGIC:
            raise DataError(f"not a weight bundle: {path}")
        (header_len,) = struct.unpack_from("<Q", raw, len(_MAGIC))
        header_start = len(_MAGIC) + 8
        try:
            header = json.loads(raw[header_start : header_start + header_len])
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt bundle header in {path}: {exc}") from None
        if "version" not in header:
            raise DataError(f"bundle header missing version field: {path}")
        if header["version"] != _VERSION:
            raise DataError(f"unsupported bundle version {header['version']} in {path}")
        data_start = header_start + header_len
        out = cls()
        for entry in header["tensors"]:
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise DataError(f"unsupported tensor dtype {entry['dtype']!r} in {path}")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = data_start + entry["offset"]
            arr = np.frombuffer(raw, dtype=dtype, count=count, offset=start).reshape(shape)
            out[entry["name"]] = arr.copy()
        return out

    def require(self, name: str, shape: tuple) -> np.ndarray:
        """Fetch a tensor, enforcing its expected shape."""
        if name not in self:
            raise DataError(f"weight bundle missing tensor {name!r}")
        arr = self[name]
        if tuple(arr.shape) != tuple(shape):
            raise DataError(f"tensor {name!r} has shape {arr.shape}, expected {tuple(shape)}")
        return arr
