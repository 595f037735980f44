"""Dense tensor values and their on-disk forms.

A DenseTensor is a row-major float64 array with explicit dims. The binary
format is a little-endian header (order, then each extent, unsigned 64-bit)
followed by the row-major float64 payload. The JSON form spells the same
content as {"dims": [...], "data": [...]} with data flattened row-major.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ExtentMismatch


class DenseTensor:
    """Row-major float64 tensor. Scalars have dims == ()."""

    __slots__ = ("dims", "data")

    def __init__(self, dims, data=None):
        dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in dims):
            raise ExtentMismatch(f"non-positive extent in {dims}")
        self.dims = dims
        if data is None:
            self.data = np.zeros(dims, dtype=np.float64)
        else:
            arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
            if arr.shape != dims:
                arr = arr.reshape(dims)
            self.data = arr

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def volume(self) -> int:
        v = 1
        for d in self.dims:
            v *= d
        return v

    def copy(self) -> "DenseTensor":
        return DenseTensor(self.dims, self.data.copy())

    def __getitem__(self, coord):
        return float(self.data[coord])

    def __setitem__(self, coord, value):
        self.data[coord] = value

    def __eq__(self, other):
        return (
            isinstance(other, DenseTensor)
            and self.dims == other.dims
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"


def zeros(dims) -> DenseTensor:
    return DenseTensor(dims)


_HEADER_WORD = struct.Struct("<Q")


def to_bytes(t: DenseTensor) -> bytes:
    head = _HEADER_WORD.pack(t.order) + b"".join(_HEADER_WORD.pack(d) for d in t.dims)
    return head + np.ascontiguousarray(t.data, dtype="<f8").tobytes()


def from_bytes(raw: bytes) -> DenseTensor:
    (order,) = _HEADER_WORD.unpack_from(raw, 0)
    dims = tuple(
        _HEADER_WORD.unpack_from(raw, 8 * (1 + k))[0] for k in range(order)
    )
    payload = raw[8 * (1 + order):]
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    expect = 1
    for d in dims:
        expect *= d
    if data.size != expect:
        raise ExtentMismatch(f"payload holds {data.size} values, dims {dims} need {expect}")
    return DenseTensor(dims, data.reshape(dims))


def save_tensor(t: DenseTensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(t))


def load_tensor(path) -> DenseTensor:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def to_json_obj(t: DenseTensor) -> dict:
    return {"dims": list(t.dims), "data": [float(x) for x in t.data.reshape(-1)]}


def from_json_obj(obj) -> DenseTensor:
    dims = tuple(obj["dims"])
    return DenseTensor(dims, np.array(obj["data"], dtype=np.float64).reshape(dims))


def save_tensor_json(t: DenseTensor, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_obj(t), fh)


def load_tensor_json(path) -> DenseTensor:
    with open(path) as fh:
        return from_json_obj(json.load(fh))
