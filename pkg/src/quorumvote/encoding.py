"""Byte-level encoding helpers shared by file formats and wire messages.

Canonical JSON (sorted keys, no whitespace, UTF-8) is the byte form used
for every signature in the system; length-prefixed binary is used for the
on-disk containers (key files, vote store, archive).
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Any, BinaryIO


class FormatError(Exception):
    """A binary container or structured file does not parse."""


def canonical_json_bytes(obj: Any) -> bytes:
    """Deterministic JSON encoding: sorted keys, compact separators, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise FormatError(f"invalid base64 field: {exc}") from exc


def lp_write(fp: BinaryIO, data: bytes) -> None:
    """Write a 4-byte big-endian length followed by the bytes."""
    fp.write(struct.pack(">I", len(data)))
    fp.write(data)


def lp_read(fp: BinaryIO) -> bytes:
    header = fp.read(4)
    if len(header) != 4:
        raise FormatError("truncated length prefix")
    (length,) = struct.unpack(">I", header)
    data = fp.read(length)
    if len(data) != length:
        raise FormatError("truncated length-prefixed field")
    return data


def lp_bytes(*fields: bytes) -> bytes:
    """Concatenate fields, each with its 4-byte length prefix."""
    out = bytearray()
    for field in fields:
        out += struct.pack(">I", len(field))
        out += field
    return bytes(out)


def read_exact(fp: BinaryIO, n: int, what: str = "bytes") -> bytes:
    data = fp.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what}")
    return data
