"""Schema block codec shared by the SIPC and PQL1 containers.

Layout: u16 ncols; per column u16 name_len + name bytes,
u8 type_tag {0=i64, 1=f64, 2=utf8, 3=bool}, u8 dict_flag, u8 nullable.
Little-endian.
"""

from __future__ import annotations

import struct

from .columnar import DType, Field
from .errors import ParseError

TYPE_TAGS = {DType.INT64: 0, DType.FLOAT64: 1, DType.UTF8: 2, DType.BOOL: 3}
TAG_TYPES = {v: k for k, v in TYPE_TAGS.items()}


def encode_schema(fields: list[Field]) -> bytes:
    out = bytearray(struct.pack("<H", len(fields)))
    for f in fields:
        name = f.name.encode("utf-8")
        out += struct.pack("<H", len(name)) + name
        out += struct.pack(
            "<BBB", TYPE_TAGS[f.dtype], 1 if f.dict_encoded else 0, 1 if f.nullable else 0
        )
    return bytes(out)


def decode_schema(data: bytes, pos: int = 0) -> tuple[list[Field], int]:
    try:
        (ncols,) = struct.unpack_from("<H", data, pos)
        pos += 2
        fields = []
        for _ in range(ncols):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len]
            if len(name) != name_len:
                raise ParseError("truncated column name")
            pos += name_len
            tag, dict_flag, nullable = struct.unpack_from("<BBB", data, pos)
            pos += 3
            if tag not in TAG_TYPES:
                raise ParseError(f"unknown type tag {tag}")
            fields.append(
                Field(name.decode("utf-8"), TAG_TYPES[tag], bool(dict_flag), bool(nullable))
            )
        return fields, pos
    except struct.error as exc:
        raise ParseError(str(exc)) from None
