"""Versioned binary container used for model and NMF basis files.

Layout (all integers little-endian)::

    magic            8 bytes, e.g. b"DRNNSEP1" or b"NMFBASE1"
    header_len       uint32
    header           header_len bytes of UTF-8 JSON (sorted keys)
    blocks           float64 little-endian, concatenated in header["blocks"] order,
                     each block row-major
    crc32            uint32 over header_len + header + blocks

The header always carries ``format_version`` ("major.minor") and ``blocks``,
a list of ``{"name": ..., "shape": [...]}``.  Readers accept any file with the
same major version.
"""
import json
import struct
import zlib

import numpy as np

from .errors import FormatError

FORMAT_VERSION = "1.0"


def _major(version):
    try:
        return int(str(version).split(".")[0])
    except ValueError as exc:
        raise FormatError(f"unparseable format version {version!r}") from exc


def pack(magic: bytes, header: dict, blocks: list) -> bytes:
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    header = dict(header)
    header.setdefault("format_version", FORMAT_VERSION)
    header["blocks"] = [
        {"name": name, "shape": list(np.shape(arr))} for name, arr in blocks
    ]
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in blocks)
    payload = struct.pack("<I", len(text)) + text + body
    return magic + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def unpack(data: bytes, magic: bytes):
    """Return ``(header, {name: array})``; raise FormatError on any inconsistency."""
    if len(data) < 16:
        raise FormatError("file is truncated")
    if data[:8] != magic:
        raise FormatError(f"bad magic {data[:8]!r}, expected {magic!r}")
    payload, crc_bytes = data[8:-4], data[-4:]
    (hlen,) = struct.unpack("<I", payload[:4])
    if 4 + hlen > len(payload):
        raise FormatError("file is truncated (header)")
    try:
        header = json.loads(payload[4:4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    version = header.get("format_version")
    if _major(version) != _major(FORMAT_VERSION):
        raise FormatError(f"unsupported format version {version}, reader is {FORMAT_VERSION}")
    specs = header.get("blocks", [])
    sizes = [int(np.prod(s["shape"], dtype=np.int64)) for s in specs]
    expected = 4 + hlen + 8 * sum(sizes)
    if len(payload) != expected:
        raise FormatError(f"file is truncated or padded: payload {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise FormatError("checksum mismatch")
    arrays = {}
    offset = 4 + hlen
    for spec, n in zip(specs, sizes):
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset)
        arrays[spec["name"]] = arr.astype(np.float64).reshape(spec["shape"])
        offset += 8 * n
    return header, arrays


def write(path, magic: bytes, header: dict, blocks: list) -> None:
    with open(path, "wb") as fh:
        fh.write(pack(magic, header, blocks))


def read(path, magic: bytes):
    with open(path, "rb") as fh:
        return unpack(fh.read(), magic)
