"""Canonical, length-prefixed byte encoding.

Every value maps to exactly one byte string, so digests computed over the
encoding are stable across runs and platforms. The layout is documented in
``docs/FORMATS.md``; changing it invalidates every persisted log.
"""

from __future__ import annotations

import dataclasses
import enum
import struct
from typing import Any

_LEN = struct.Struct(">I")


class DecodeError(ValueError):
    pass


def _frame(tag: bytes, payload: bytes) -> bytes:
    return tag + _LEN.pack(len(payload)) + payload


def encode(value: Any) -> bytes:
    if value is None:
        return b"N"
    if isinstance(value, bool):
        return b"B" + (b"\x01" if value else b"\x00")
    if isinstance(value, enum.Enum):
        return encode(value.value)
    if isinstance(value, int):
        return _frame(b"I", str(value).encode("ascii"))
    if isinstance(value, str):
        return _frame(b"S", value.encode("utf-8"))
    if isinstance(value, (bytes, bytearray)):
        return _frame(b"Y", bytes(value))
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        fields = dataclasses.fields(value)
        parts = [encode(type(value).__name__), _LEN.pack(len(fields))]
        for f in fields:
            parts.append(encode(f.name))
            parts.append(encode(getattr(value, f.name)))
        return _frame(b"R", b"".join(parts))
    if isinstance(value, (list, tuple)):
        parts = [_LEN.pack(len(value))] + [encode(v) for v in value]
        return _frame(b"L", b"".join(parts))
    if isinstance(value, (set, frozenset)):
        items = sorted(encode(v) for v in value)
        return _frame(b"L", _LEN.pack(len(items)) + b"".join(items))
    if isinstance(value, dict):
        keys = sorted(value)
        parts = [_LEN.pack(len(keys))]
        for k in keys:
            if not isinstance(k, str):
                raise TypeError(f"dict keys must be str, got {type(k).__name__}")
            parts.append(encode(k))
            parts.append(encode(value[k]))
        return _frame(b"D", b"".join(parts))
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def length(self) -> int:
        return _LEN.unpack(self.take(4))[0]


def _decode(r: _Reader) -> Any:
    tag = r.take(1)
    if tag == b"N":
        return None
    if tag == b"B":
        b = r.take(1)
        if b not in (b"\x00", b"\x01"):
            raise DecodeError("bad bool byte")
        return b == b"\x01"
    n = r.length()
    body = _Reader(r.take(n))
    if tag == b"I":
        text = body.data.decode("ascii", errors="strict")
        try:
            value = int(text)
        except ValueError as exc:
            raise DecodeError(f"bad integer {text!r}") from exc
        if str(value) != text:
            raise DecodeError(f"non-canonical integer {text!r}")
        return value
    if tag == b"S":
        try:
            return body.data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("bad utf-8") from exc
    if tag == b"Y":
        return body.data
    if tag == b"L":
        count = body.length()
        items = [_decode(body) for _ in range(count)]
        _expect_end(body)
        return items
    if tag == b"D":
        count = body.length()
        out = {}
        for _ in range(count):
            k = _decode(body)
            out[k] = _decode(body)
        _expect_end(body)
        return out
    if tag == b"R":
        name = _decode(body)
        count = body.length()
        out = {"__type__": name}
        for _ in range(count):
            k = _decode(body)
            out[k] = _decode(body)
        _expect_end(body)
        return out
    raise DecodeError(f"unknown tag {tag!r}")


def _expect_end(r: _Reader) -> None:
    if r.pos != len(r.data):
        raise DecodeError("trailing bytes inside container")


def decode(data: bytes) -> Any:
    """Decode bytes produced by :func:`encode`.

    Dataclasses come back as dicts carrying a ``__type__`` key; enums come
    back as their values.
    """
    r = _Reader(data)
    value = _decode(r)
    _expect_end(r)
    return value
