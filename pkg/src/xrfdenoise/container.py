"""XRFC v1 container format.

Layout::

    b"XRFC0001" | u32 LE header length L | L bytes UTF-8 JSON header | payload | u64 LE CRC-64

The checksum is CRC-64/XZ over the payload only. Arrays are little-endian and
C-ordered, so volumes are channel-fastest. Abundance payloads append the
active mask as one byte per entry after the coefficients.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import crcmod
import numpy as np

from .exceptions import ContainerError, DimensionError, InvariantError
from .volume import Abundance, CountVolume, Dictionary, RateVolume, RgbImage

MAGIC = b"XRFC0001"
VOLUME_ORDER = "h,w,c-c-fastest"
MATRIX_ORDER = "rows,cols-cols-fastest"

_crc64 = crcmod.mkCrcFun(0x142F0E1EBA9EA3693, initCrc=0, rev=True, xorOut=0xFFFFFFFFFFFFFFFF)

_KINDS = {
    CountVolume: ("counts", "u32", VOLUME_ORDER, 3),
    RateVolume: ("rates", "f64", VOLUME_ORDER, 3),
    RgbImage: ("rgb", "f64", VOLUME_ORDER, 3),
    Dictionary: ("dict", "f64", MATRIX_ORDER, 2),
    Abundance: ("abund", "f64", MATRIX_ORDER, 2),
}
_BY_NAME = {fmt[0]: (cls, *fmt[1:]) for cls, fmt in _KINDS.items()}
_DTYPES = {"u32": np.dtype("<u4"), "f64": np.dtype("<f8")}


def crc64(payload: bytes) -> int:
    """CRC-64/XZ of ``payload``."""
    return _crc64(payload)


def _encode(obj):
    try:
        kind, dtype, order, _ = _KINDS[type(obj)]
    except KeyError:
        raise TypeError(f"cannot serialize {type(obj).__name__}") from None
    header = {"kind": kind, "dims": list(obj.data.shape), "dtype": dtype, "order": order}
    if kind == "counts":
        header["dwell_s"] = obj.dwell
    payload = np.ascontiguousarray(obj.data, dtype=_DTYPES[dtype]).tobytes()
    if kind == "abund":
        header["mask"] = "u8"
        payload += np.ascontiguousarray(obj.active, dtype=np.uint8).tobytes()
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<I", len(head)), head, payload, struct.pack("<Q", crc64(payload))]
    )


def dumps(obj) -> bytes:
    """Serialize one of the five core types to XRFC bytes."""
    return _encode(obj)


def loads(blob: bytes):
    """Parse XRFC bytes; every failure raises before any object is built."""
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerError("bad magic: not an XRFC v1 container")
    (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if len(blob) < start + hlen:
        raise ContainerError("truncated header")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"malformed header: {exc}") from None
    if not isinstance(header, dict):
        raise ContainerError("malformed header: not a JSON object")

    kind = header.get("kind")
    if kind not in _BY_NAME:
        raise ContainerError(f"malformed header: unknown kind {kind!r}")
    cls, dtype_name, order, ndim = _BY_NAME[kind]
    if header.get("dtype") != dtype_name:
        raise ContainerError(f"malformed header: kind {kind} requires dtype {dtype_name}")
    if header.get("order") != order:
        raise ContainerError(f"malformed header: unsupported order {header.get('order')!r}")
    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != ndim
        or not all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in dims)
    ):
        raise ContainerError(f"malformed header: bad dims {dims!r}")
    if kind == "rgb" and dims[2] != 3:
        raise ContainerError("malformed header: rgb must have 3 components")

    dtype = _DTYPES[dtype_name]
    count = int(np.prod(dims))
    nbytes = count * dtype.itemsize
    if kind == "abund":
        if header.get("mask") != "u8":
            raise ContainerError("malformed header: abundance requires a u8 mask")
        nbytes += count
    body = blob[start + hlen :]
    if len(body) < nbytes + 8:
        raise ContainerError(
            f"truncated payload: header declares {nbytes} bytes, {max(len(body) - 8, 0)} present"
        )
    if len(body) > nbytes + 8:
        raise ContainerError("malformed container: trailing bytes after checksum")
    payload = body[:nbytes]
    (stored,) = struct.unpack("<Q", body[nbytes:])
    if crc64(payload) != stored:
        raise ContainerError("checksum mismatch")

    values = np.frombuffer(payload, dtype=dtype, count=count).reshape(dims)
    try:
        if kind == "counts":
            dwell = header.get("dwell_s")
            if not isinstance(dwell, (int, float)) or isinstance(dwell, bool):
                raise ContainerError("malformed header: counts require dwell_s")
            return CountVolume(values, float(dwell))
        if kind == "abund":
            mask = np.frombuffer(payload, dtype=np.uint8, offset=count * dtype.itemsize)
            if np.any(mask > 1):
                raise InvariantError("abundance mask bytes must be 0 or 1")
            return Abundance(values, mask.reshape(dims).astype(bool))
        return cls(values)
    except DimensionError as exc:
        raise ContainerError(str(exc)) from None


def write_container(obj, path) -> None:
    Path(path).write_bytes(_encode(obj))


def read_container(path):
    return loads(Path(path).read_bytes())


def export_dictionary_csv(d: Dictionary, path) -> None:
    """Write atoms as CSV columns under a header row of atom indices."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(range(d.atoms))
        for row in d.data:
            writer.writerow(repr(float(v)) for v in row)


def import_dictionary_csv(path) -> Dictionary:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContainerError("empty dictionary CSV")
    return Dictionary(np.array([[float(v) for v in row] for row in rows[1:]]))
