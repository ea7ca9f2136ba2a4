"""PQL1: a small on-disk columnar format whose decode genuinely costs CPU.

Layout (little-endian throughout):

    magic "PQL1"
    schema: u16 ncols; per column u16 name_len + name bytes,
            u8 type_tag {0=i64, 1=f64, 2=utf8, 3=bool}, u8 dict_flag, u8 nullable
    per column, in schema order:
            u8 encoding {0=Plain, 1=ZigzagDeltaVarint, 2=DictPlain}
            u64 raw_len, u64 enc_len, payload[enc_len]

Payloads:
    Plain i64/f64    raw values; raw_len = 8 x rows
    Plain utf8       u32 count, u32 x (count+1) offsets, value bytes;
                     raw_len = value bytes
    Plain bool       u32 count, bitmap (LSB-first); raw_len = bitmap bytes
    ZigzagDeltaVarint (i64 only)
                     varint stream of zigzag(first), zigzag(deltas);
                     raw_len = 8 x rows
    DictPlain (utf8 only)
                     u32 rows, u32 dict_count, u32 x (dict_count+1) dict
                     offsets, dict bytes, i32 x rows codes; raw_len = 4 x rows
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .columnar import (
    Array,
    Column,
    DType,
    Field,
    MemArena,
    Schema,
    Table,
    column_values,
)
from .columnar.types import next_dict_id
from .errors import BadMagic, CorruptChunk, EncodingMismatch, ParseError, UnknownColumn
from .mem import Store
from .wire import decode_schema, encode_schema

MAGIC = b"PQL1"

PLAIN = 0
ZIGZAG_DELTA_VARINT = 1
DICT_PLAIN = 2


@dataclass(frozen=True)
class LoadOptions:
    dict_columns: frozenset = frozenset()
    threads: int = 0  # 0 means hardware parallelism

    @staticmethod
    def of(dict_columns=(), threads: int = 0) -> "LoadOptions":
        return LoadOptions(frozenset(dict_columns), threads)


# ----------------------------------------------------------------- varints


def zigzag_encode(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.int64)
    return ((v << 1) ^ (v >> 63)).view(np.uint64)


def encode_varints(zz: np.ndarray) -> bytes:
    if len(zz) == 0:
        return b""
    head = bytearray()
    v = int(zz[0])
    while v >= 0x80:
        head.append((v & 0x7F) | 0x80)
        v >>= 7
    head.append(v)
    tail = zz[1:]
    if len(tail) and int(tail.max()) < 0x80:
        return bytes(head) + tail.astype(np.uint8).tobytes()
    out = bytearray(head)
    for v in tail.tolist():
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def decode_varints(buf: bytes, count: int) -> np.ndarray:
    """Vectorized varint decode returning raw uint64 zigzag values."""
    if count == 0:
        if buf:
            raise CorruptChunk("trailing varint bytes")
        return np.empty(0, dtype=np.uint64)
    b = np.frombuffer(buf, dtype=np.uint8)
    term = (b & 0x80) == 0
    n = int(term.sum())
    if n != count or not len(b) or not term[-1]:
        raise CorruptChunk(f"expected {count} varints, stream holds {n}")
    vid = np.zeros(len(b), dtype=np.int64)
    np.cumsum(term[:-1], out=vid[1:])
    ends = np.nonzero(term)[0]
    starts = np.empty(n, dtype=np.int64)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    shift = ((np.arange(len(b)) - starts[vid]) * 7).astype(np.uint64)
    if int(shift.max()) > 63:
        raise CorruptChunk("varint wider than 64 bits")
    vals = (b & 0x7F).astype(np.uint64) << shift
    out = np.zeros(n, dtype=np.uint64)
    np.add.at(out, vid, vals)
    return out


def zigzag_decode(zz: np.ndarray) -> np.ndarray:
    return ((zz >> np.uint64(1)).astype(np.int64)) ^ -((zz & np.uint64(1)).astype(np.int64))


# ------------------------------------------------------------------ encode


def encode_chunk(dtype: DType, encoding: int, values: list) -> tuple[int, bytes]:
    """Returns (raw_len, payload)."""
    n = len(values)
    if encoding == PLAIN:
        if dtype in (DType.INT64, DType.FLOAT64):
            data = np.asarray(values, dtype="<i8" if dtype is DType.INT64 else "<f8")
            return data.nbytes, data.tobytes()
        if dtype is DType.UTF8:
            encoded = [v.encode("utf-8") for v in values]
            offsets = np.zeros(n + 1, dtype="<u4")
            np.cumsum(
                np.fromiter((len(e) for e in encoded), dtype="<u4", count=n),
                out=offsets[1:],
            )
            payload = b"".join(encoded)
            return len(payload), struct.pack("<I", n) + offsets.tobytes() + payload
        if dtype is DType.BOOL:
            bitmap = np.packbits(
                np.asarray(values, dtype=np.uint8), bitorder="little"
            ).tobytes()
            return len(bitmap), struct.pack("<I", n) + bitmap
    if encoding == ZIGZAG_DELTA_VARINT:
        if dtype is not DType.INT64:
            raise EncodingMismatch("ZigzagDeltaVarint applies to Int64 only")
        data = np.asarray(values, dtype=np.int64)
        deltas = np.empty(n, dtype=np.int64)
        if n:
            deltas[0] = data[0]
            np.subtract(data[1:], data[:-1], out=deltas[1:])
        return 8 * n, encode_varints(zigzag_encode(deltas))
    if encoding == DICT_PLAIN:
        if dtype is not DType.UTF8:
            raise EncodingMismatch("DictPlain applies to Utf8 only")
        seen: dict = {}
        codes = np.empty(n, dtype="<i4")
        for i, v in enumerate(values):
            code = seen.get(v)
            if code is None:
                code = len(seen)
                seen[v] = code
            codes[i] = code
        uniq = [u.encode("utf-8") for u in seen]
        offsets = np.zeros(len(uniq) + 1, dtype="<u4")
        np.cumsum(
            np.fromiter((len(u) for u in uniq), dtype="<u4", count=len(uniq)),
            out=offsets[1:],
        )
        payload = (
            struct.pack("<II", n, len(uniq))
            + offsets.tobytes()
            + b"".join(uniq)
            + codes.tobytes()
        )
        return 4 * n, payload
    raise EncodingMismatch(f"encoding {encoding} invalid for {dtype.value}")


def write_columns(fields: list[Field], columns: list[list], path: str, encodings: list[int]):
    """Serialize plain python column values to a PQL1 file."""
    if len(fields) != len(columns) or len(fields) != len(encodings):
        raise ValueError("fields, columns and encodings must align")
    out = bytearray(MAGIC)
    out += encode_schema(
        [
            Field(f.name, f.dtype, enc == DICT_PLAIN, f.nullable)
            for f, enc in zip(fields, encodings)
        ]
    )
    for f, vals, enc in zip(fields, columns, encodings):
        if any(v is None for v in vals):
            raise EncodingMismatch("PQL1 does not carry validity; no nulls allowed")
        raw_len, payload = encode_chunk(f.dtype, enc, vals)
        out += struct.pack("<BQQ", enc, raw_len, len(payload)) + payload
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(out)
    os.replace(tmp, path)


def write_source(arena: MemArena, t: Table, path: str, encodings: list[int]):
    columns = [column_values(arena, c) for c in t.columns]
    write_columns(list(t.schema.fields), columns, path, encodings)


# ------------------------------------------------------------------ decode


@dataclass
class _RawColumn:
    field: Field
    encoding: int
    raw_len: int
    payload: bytes


def _parse(path: str) -> list[_RawColumn]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path} is not a PQL1 file")
    try:
        metas, pos = decode_schema(blob, 4)
    except ParseError as exc:
        raise CorruptChunk(str(exc)) from None
    try:
        cols = []
        for f in metas:
            enc, raw_len, enc_len = struct.unpack_from("<BQQ", blob, pos)
            pos += 17
            payload = blob[pos : pos + enc_len]
            if len(payload) != enc_len:
                raise CorruptChunk(f"column {f.name}: truncated payload")
            pos += enc_len
            cols.append(_RawColumn(f, enc, raw_len, payload))
        if pos != len(blob):
            raise CorruptChunk("trailing bytes after last column")
        return cols
    except struct.error as exc:
        raise CorruptChunk(str(exc)) from None


def _decode_column(arena: MemArena, raw: _RawColumn, want_dict: bool) -> Array:
    # Hold the encoded payload in anonymous memory while decoding: decode
    # scratch makes the loader's peak exceed the final table size.
    scratch = arena.alloc(raw.payload) if raw.payload else None
    try:
        arr = _decode_into(arena, raw, want_dict)
    finally:
        if scratch is not None:
            arena.store.free_region(scratch.backing[1])
    return arr


def _decode_into(arena: MemArena, raw: _RawColumn, want_dict: bool) -> Array:
    f, enc, payload = raw.field, raw.encoding, raw.payload
    if enc == PLAIN and f.dtype in (DType.INT64, DType.FLOAT64):
        if len(payload) != raw.raw_len or raw.raw_len % 8:
            raise CorruptChunk(f"column {f.name}: bad fixed-width payload")
        n = raw.raw_len // 8
        return Array(f.dtype, n, values=arena.alloc(payload) if n else None)
    if enc == PLAIN and f.dtype is DType.UTF8:
        n, offsets, data = _split_utf8(payload, f.name)
        if len(data) != raw.raw_len:
            raise CorruptChunk(f"column {f.name}: raw_len mismatch")
        values_buf = arena.alloc(data) if data else None
        offsets_buf = arena.alloc(offsets.astype("<i8").tobytes())
        arr = Array(f.dtype, n, offsets=offsets_buf, values=values_buf)
        if want_dict:
            from .columnar.ops import dict_encode

            return dict_encode(arena, arr)
        return arr
    if enc == PLAIN and f.dtype is DType.BOOL:
        (n,) = struct.unpack_from("<I", payload, 0)
        bitmap = payload[4:]
        if len(bitmap) != raw.raw_len or raw.raw_len != -(-n // 8):
            raise CorruptChunk(f"column {f.name}: bad bitmap")
        return Array(f.dtype, n, values=arena.alloc(bitmap) if n else None)
    if enc == ZIGZAG_DELTA_VARINT:
        if raw.raw_len % 8:
            raise CorruptChunk(f"column {f.name}: bad raw_len")
        n = raw.raw_len // 8
        deltas = zigzag_decode(decode_varints(payload, n))
        data = np.cumsum(deltas, dtype=np.int64)
        return Array(f.dtype, n, values=arena.alloc_np(data) if n else None)
    if enc == DICT_PLAIN:
        n, uniq_n = struct.unpack_from("<II", payload, 0)
        pos = 8
        offsets = np.frombuffer(payload, dtype="<u4", count=uniq_n + 1, offset=pos)
        pos += 4 * (uniq_n + 1)
        dict_bytes = payload[pos : pos + int(offsets[-1])]
        pos += int(offsets[-1])
        codes = np.frombuffer(payload, dtype="<i4", count=n, offset=pos)
        if raw.raw_len != 4 * n or pos + 4 * n != len(payload):
            raise CorruptChunk(f"column {f.name}: bad dict payload")
        if want_dict:
            dictionary = Array(
                DType.UTF8,
                uniq_n,
                offsets=arena.alloc(offsets.astype("<i8").tobytes()),
                values=arena.alloc(dict_bytes) if dict_bytes else None,
            )
            return Array(
                DType.UTF8, n,
                dict_id=next_dict_id(), dictionary=dictionary,
                codes=arena.alloc(codes.tobytes()) if n else None,
            )
        # materialize plain
        parts = [
            dict_bytes[int(offsets[c]) : int(offsets[c + 1])] for c in codes
        ]
        lengths = np.fromiter((len(p) for p in parts), dtype=np.int64, count=n)
        new_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lengths, out=new_offsets[1:])
        data = b"".join(parts)
        return Array(
            DType.UTF8, n,
            offsets=arena.alloc(new_offsets.tobytes()),
            values=arena.alloc(data) if data else None,
        )
    raise CorruptChunk(f"column {f.name}: unknown encoding {enc}")


def _split_utf8(payload: bytes, name: str):
    (n,) = struct.unpack_from("<I", payload, 0)
    offsets = np.frombuffer(payload, dtype="<u4", count=n + 1, offset=4)
    data_start = 4 + 4 * (n + 1)
    data = payload[data_start:]
    if len(data) != int(offsets[-1]):
        raise CorruptChunk(f"column {name}: offsets do not cover value bytes")
    return n, offsets, data


def load_source(store: Store, path: str, opts: LoadOptions, account) -> Table:
    """Decode a PQL1 file into anonymous memory charged to the account,
    one concurrent decoder per column (up to opts.threads)."""
    raws = _parse(path)
    names = {r.field.name: r.field for r in raws}
    for name in opts.dict_columns:
        f = names.get(name)
        if f is None:
            raise UnknownColumn(f"dict column {name} not in source")
        if f.dtype is not DType.UTF8:
            raise EncodingMismatch(f"dict column {name} is not Utf8")
    arena = MemArena(store, account)
    threads = opts.threads or os.cpu_count() or 1

    def work(raw: _RawColumn) -> Array:
        return _decode_column(arena, raw, raw.field.name in opts.dict_columns)

    if threads > 1 and len(raws) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            arrays = list(pool.map(work, raws))
    else:
        arrays = [work(r) for r in raws]
    fields = [
        Field(r.field.name, r.field.dtype, arrays[i].dict_encoded, r.field.nullable)
        for i, r in enumerate(raws)
    ]
    return Table(Schema(fields), [Column([a]) for a in arrays], arrays[0].length if arrays else 0)
