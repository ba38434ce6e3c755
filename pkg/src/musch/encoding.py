"""Canonical, deterministic byte encoding for protocol values.

Every value is written as a one-byte tag followed by a fixed layout;
variable-length parts are length-prefixed.  Dataclasses registered with
:func:`register` are encoded field by field in declaration order, so the
same message always produces the same bytes on every platform.
"""

from __future__ import annotations

import dataclasses
import enum
import struct

_REGISTRY: dict[str, type] = {}

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")


class EncodingError(ValueError):
    pass


def register(cls):
    """Class decorator making a dataclass or Enum encodable."""
    name = cls.__name__
    if name in _REGISTRY and _REGISTRY[name] is not cls:
        raise EncodingError(f"duplicate registration for {name}")
    _REGISTRY[name] = cls
    return cls


def _name(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _enc(value, out: list[bytes]) -> None:
    if value is None:
        out.append(b"N")
    elif isinstance(value, bool):
        out.append(b"B\x01" if value else b"B\x00")
    elif isinstance(value, enum.Enum):
        out.append(b"E")
        out.append(_name(type(value).__name__))
        out.append(_name(str(value.value)))
    elif isinstance(value, int):
        out.append(b"I")
        out.append(_I64.pack(value))
    elif isinstance(value, str):
        out.append(b"S")
        out.append(_name(value))
    elif isinstance(value, (bytes, bytearray)):
        out.append(b"Y")
        out.append(_U32.pack(len(value)))
        out.append(bytes(value))
    elif isinstance(value, (tuple, list)):
        out.append(b"T")
        out.append(_U32.pack(len(value)))
        for item in value:
            _enc(item, out)
    elif isinstance(value, frozenset):
        parts = sorted(encode(item) for item in value)
        out.append(b"F")
        out.append(_U32.pack(len(parts)))
        out.extend(parts)
    elif dataclasses.is_dataclass(value) and type(value).__name__ in _REGISTRY:
        fields = dataclasses.fields(value)
        out.append(b"D")
        out.append(_name(type(value).__name__))
        out.append(_U32.pack(len(fields)))
        for f in fields:
            _enc(getattr(value, f.name), out)
    else:
        raise EncodingError(f"cannot encode {type(value).__name__}")


def encode(value) -> bytes:
    out: list[bytes] = []
    _enc(value, out)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise EncodingError("truncated input")
        chunk = self.data[self.pos:self.pos + k]
        self.pos += k
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def name(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _dec(r: _Reader):
    tag = r.take(1)
    if tag == b"N":
        return None
    if tag == b"B":
        return r.take(1) == b"\x01"
    if tag == b"I":
        return _I64.unpack(r.take(8))[0]
    if tag == b"S":
        return r.name()
    if tag == b"Y":
        return r.take(r.u32())
    if tag == b"T":
        return tuple(_dec(r) for _ in range(r.u32()))
    if tag == b"F":
        return frozenset(_dec(r) for _ in range(r.u32()))
    if tag == b"E":
        cls = _lookup(r.name())
        raw = r.name()
        for member in cls:
            if str(member.value) == raw:
                return member
        raise EncodingError(f"bad {cls.__name__} value {raw!r}")
    if tag == b"D":
        cls = _lookup(r.name())
        count = r.u32()
        fields = dataclasses.fields(cls)
        if count != len(fields):
            raise EncodingError(f"{cls.__name__}: expected {len(fields)} fields, got {count}")
        return cls(*(_dec(r) for _ in range(count)))
    raise EncodingError(f"unknown tag {tag!r}")


def _lookup(name: str) -> type:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise EncodingError(f"unregistered type {name}") from None


def decode(data: bytes):
    r = _Reader(data)
    value = _dec(r)
    if r.pos != len(data):
        raise EncodingError("trailing bytes")
    return value
