"""Columnar constructors and compute ops.

Subtractive ops (slice, project, horizontal concat) return views over input
buffers, never touching data bytes. Validity bitmaps and bit-packed BOOL
values are the one exception: they are re-materialized on slice and gather,
a deliberately allowed small copy (they cost at most rows/8 bytes).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import SchemaMismatch, UnknownColumn
from .arena import MemArena
from .types import (
    Array,
    Buffer,
    Column,
    DType,
    Field,
    Mask,
    Schema,
    Table,
    field_for,
    next_dict_id,
)

VERTICAL = "vertical"
HORIZONTAL = "horizontal"

NUMERIC = (DType.INT64, DType.FLOAT64)
_NP = {DType.INT64: np.dtype("<i8"), DType.FLOAT64: np.dtype("<f8")}


def pack_bits(flags: Sequence[bool]) -> bytes:
    return np.packbits(np.asarray(flags, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[
        :count
    ].astype(bool)


# --------------------------------------------------------------- construct


def make_array(arena: MemArena, dtype: DType, values: list, validity=None) -> Array:
    if validity is not None and len(validity) != len(values):
        raise TypeError("validity length must match values length")
    n = len(values)
    null_count = 0
    vbuf = None
    if validity is not None:
        null_count = sum(1 for v in validity if not v)
        if null_count:
            vbuf = arena.alloc(pack_bits(validity))
            values = [
                v if ok and v is not None else _placeholder(dtype)
                for v, ok in zip(values, validity)
            ]
        # an all-true validity carries no information; drop it

    if dtype in NUMERIC:
        try:
            data = np.asarray(values, dtype=_NP[dtype])
        except (ValueError, OverflowError) as exc:
            raise TypeError(f"values do not fit {dtype.value}: {exc}") from None
        return Array(
            dtype, n, null_count, vbuf, None, arena.alloc_np(data) if n else None
        )
    if dtype is DType.UTF8:
        encoded = []
        for v in values:
            if not isinstance(v, str):
                raise TypeError(f"expected str, got {type(v).__name__}")
            encoded.append(v.encode("utf-8"))
        lengths = np.fromiter((len(e) for e in encoded), dtype=np.int64, count=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        payload = b"".join(encoded)
        return Array(
            dtype,
            n,
            null_count,
            vbuf,
            arena.alloc_np(offsets),
            arena.alloc(payload) if payload else None,
        )
    if dtype is DType.BOOL:
        for v in values:
            if not isinstance(v, (bool, np.bool_)):
                raise TypeError(f"expected bool, got {type(v).__name__}")
        return Array(
            dtype, n, null_count, vbuf, None, arena.alloc(pack_bits(values)) if n else None
        )
    raise TypeError(f"unsupported dtype {dtype}")


def _placeholder(dtype: DType):
    if dtype in NUMERIC:
        return 0
    return "" if dtype is DType.UTF8 else False


# ------------------------------------------------------------------ values


def array_values(arena: MemArena, arr: Array) -> list:
    """Logical python values over the array's window, None for nulls."""
    n = arr.length
    if n == 0:
        return []
    if arr.dict_encoded:
        codes = arena.read_np(arr.codes, "<i4", n)
        dict_vals = array_values(arena, arr.dictionary)
        out = [dict_vals[c] for c in codes]
    elif arr.dtype in NUMERIC:
        data = arena.read_np(arr.values, _NP[arr.dtype], n)
        out = data.tolist()
    elif arr.dtype is DType.UTF8:
        offsets = arena.read_np(arr.offsets, "<i8", n + 1, arr.slice_offset * 8)
        base = int(offsets[0])
        payload = (
            arena.read(arr.values, base, int(offsets[-1]) - base)
            if offsets[-1] > base
            else b""
        )
        out = [
            payload[int(offsets[i]) - base : int(offsets[i + 1]) - base].decode("utf-8")
            for i in range(n)
        ]
    elif arr.dtype is DType.BOOL:
        out = unpack_bits(arena.read(arr.values), n).tolist()
    else:
        raise TypeError(arr.dtype)
    if arr.null_count:
        valid = unpack_bits(arena.read(arr.validity), n)
        out = [v if ok else None for v, ok in zip(out, valid)]
    return out


def column_values(arena: MemArena, col: Column) -> list:
    out = []
    for chunk in col.chunks:
        out.extend(array_values(arena, chunk))
    return out


def table_values(arena: MemArena, t: Table) -> dict:
    return {
        f.name: column_values(arena, col) for f, col in zip(t.schema.fields, t.columns)
    }


# -------------------------------------------------------------- dictionary


def dict_encode(arena: MemArena, arr: Array) -> Array:
    if arr.dtype is not DType.UTF8 or arr.dict_encoded:
        raise TypeError("dict_encode takes a plain UTF8 array")
    values = array_values(arena, arr)
    seen: dict = {}
    codes = np.empty(arr.length, dtype=np.int32)
    for i, v in enumerate(values):
        if v is None:
            codes[i] = 0
            continue
        code = seen.get(v)
        if code is None:
            code = len(seen)
            seen[v] = code
        codes[i] = code
    dictionary = make_array(arena, DType.UTF8, list(seen))
    return Array(
        DType.UTF8,
        arr.length,
        arr.null_count,
        arr.validity,
        dict_id=next_dict_id(),
        dictionary=dictionary,
        codes=arena.alloc_np(codes) if arr.length else None,
    )


def dict_decode(arena: MemArena, arr: Array) -> Array:
    if not arr.dict_encoded:
        raise TypeError("array is not dictionary-encoded")
    values = array_values(arena, arr)
    validity = None if not arr.null_count else [v is not None for v in values]
    return make_array(arena, DType.UTF8, [v if v is not None else "" for v in values], validity)


# ------------------------------------------------------------------- views


def _slice_validity(arena, arr: Array, start: int, length: int):
    if not arr.null_count:
        return None, 0
    bits = unpack_bits(arena.read(arr.validity), arr.length)[start : start + length]
    nulls = int(length - bits.sum())
    if not nulls:
        return None, 0
    return arena.alloc(pack_bits(bits)), nulls


def slice_array(arena: MemArena, arr: Array, start: int, length: int) -> Array:
    if start == 0 and length == arr.length:
        return arr
    validity, nulls = _slice_validity(arena, arr, start, length)
    if arr.dict_encoded:
        codes = arr.codes.shifted(start * 4, length * 4) if length else None
        return Array(
            arr.dtype, length, nulls, validity,
            dict_id=arr.dict_id, dictionary=arr.dictionary, codes=codes,
        )
    if arr.dtype in NUMERIC:
        width = arr.dtype.fixed_width
        values = arr.values.shifted(start * width, length * width) if length else None
        return Array(arr.dtype, length, nulls, validity, None, values)
    if arr.dtype is DType.UTF8:
        # reuse the parent's entire offsets and values buffers; the slice
        # offset travels in metadata
        return Array(
            arr.dtype, length, nulls, validity,
            arr.offsets, arr.values, slice_offset=arr.slice_offset + start,
        )
    # BOOL: bit granularity cannot shift by bytes; re-materialize
    bits = unpack_bits(arena.read(arr.values), arr.length)[start : start + length]
    return Array(
        arr.dtype, length, nulls, validity, None,
        arena.alloc(pack_bits(bits)) if length else None,
    )


def slice_table(arena: MemArena, t: Table, start: int, length: int) -> Table:
    if start < 0 or length < 0 or start + length > t.nrows:
        raise IndexError(f"slice [{start}, {start + length}) outside {t.nrows} rows")
    cols = []
    for col in t.columns:
        chunk = combine_chunks(arena, col).one() if len(col.chunks) > 1 else col.one()
        cols.append(Column([slice_array(arena, chunk, start, length)]))
    return Table(t.schema, cols, length)


def project(t: Table, names: list[str]) -> Table:
    fields, cols = [], []
    for name in names:
        try:
            i = t.schema.index(name)
        except KeyError:
            raise UnknownColumn(name) from None
        fields.append(t.schema.fields[i])
        cols.append(t.columns[i])
    return Table(Schema(fields), cols, t.nrows)


def concat(arena: MemArena, tables: list[Table], axis: str) -> Table:
    if not tables:
        raise SchemaMismatch("concat of zero tables")
    if axis == HORIZONTAL:
        names = []
        for t in tables:
            names.extend(t.schema.names())
        if len(set(names)) != len(names):
            raise SchemaMismatch("horizontal concat requires disjoint column names")
        nrows = tables[0].nrows
        if any(t.nrows != nrows for t in tables):
            raise SchemaMismatch("horizontal concat requires equal row counts")
        fields, cols = [], []
        for t in tables:
            fields.extend(t.schema.fields)
            cols.extend(t.columns)
        return Table(Schema(fields), cols, nrows)
    if axis != VERTICAL:
        raise ValueError(f"unknown axis {axis!r}")
    schema = tables[0].schema
    for t in tables[1:]:
        if t.schema != schema:
            raise SchemaMismatch("vertical concat requires equal schemas")
    cols = []
    for i in range(len(schema.fields)):
        chunks = [c for t in tables for c in t.columns[i].chunks]
        dict_ids = {c.dict_id for c in chunks}
        if len(dict_ids) > 1:
            # chunks encoded against different dictionaries cannot share one
            # dict message; fall back to plain materialization
            chunks = [dict_decode(arena, c) if c.dict_encoded else c for c in chunks]
        cols.append(Column(chunks))
    nrows = sum(t.nrows for t in tables)
    schema = Schema(
        [
            Field(f.name, f.dtype, cols[i].chunks[0].dict_encoded, f.nullable)
            for i, f in enumerate(schema.fields)
        ]
    )
    return Table(schema, cols, nrows)


def combine_chunks(arena: MemArena, col: Column) -> Column:
    """Materialize a multi-chunk column into one fresh chunk (a real copy)."""
    if len(col.chunks) == 1:
        return col
    values = column_values(arena, col)
    validity = None
    if any(c.null_count for c in col.chunks):
        validity = [v is not None for v in values]
        values = [v if v is not None else _placeholder(col.dtype) for v in values]
    arr = make_array(arena, col.dtype, values, validity)
    if col.chunks[0].dict_encoded:
        arr = dict_encode(arena, arr)
    return Column([arr])


# ----------------------------------------------------------------- compute


def add_columns(
    arena: MemArena,
    t: Table,
    exprs: list[tuple],
    materialize_all: bool = False,
) -> Table:
    """Append computed columns. exprs entries are (name, (op, colA, colB))
    with op in {add, sub, mul}. With materialize_all, every output buffer is
    rebuilt fresh (models engines that must copy out of their own format)."""
    fields = list(t.schema.fields)
    cols = list(t.columns)
    for name, (op, a, b) in exprs:
        out = eval_binary(arena, t, op, a, b)
        fields.append(field_for(name, out, nullable=out.null_count > 0))
        cols.append(Column([out]))
    result = Table(Schema(fields), cols, t.nrows)
    if materialize_all:
        result = Table(
            result.schema,
            [copy_column(arena, c) for c in result.columns],
            result.nrows,
        )
    return result


def eval_binary(arena: MemArena, t: Table, op: str, a: str, b: str) -> Array:
    xa, va = _numeric_operand(arena, t, a)
    xb, vb = _numeric_operand(arena, t, b)
    if op == "add":
        data = xa + xb
    elif op == "sub":
        data = xa - xb
    elif op == "mul":
        data = xa * xb
    else:
        raise ValueError(f"unknown op {op!r}")
    validity = None
    if va is not None or vb is not None:
        ok = np.ones(t.nrows, dtype=bool)
        if va is not None:
            ok &= va
        if vb is not None:
            ok &= vb
        validity = ok.tolist()
    dtype = DType.INT64 if data.dtype == np.int64 else DType.FLOAT64
    return make_array(arena, dtype, data.tolist(), validity)


def _numeric_operand(arena: MemArena, t: Table, name: str):
    try:
        i = t.schema.index(name)
    except KeyError:
        raise UnknownColumn(name) from None
    col = combine_chunks(arena, t.columns[i])
    arr = col.one()
    if arr.dtype not in NUMERIC or arr.dict_encoded:
        raise TypeError(f"column {name} is not numeric")
    data = arena.read_np(arr.values, _NP[arr.dtype], arr.length)
    valid = (
        unpack_bits(arena.read(arr.validity), arr.length) if arr.null_count else None
    )
    return data, valid


def copy_array(arena: MemArena, arr: Array) -> Array:
    def dup(buf: Optional[Buffer]) -> Optional[Buffer]:
        return arena.alloc(arena.read(buf)) if buf is not None else None

    if arr.dict_encoded:
        return Array(
            arr.dtype, arr.length, arr.null_count, dup(arr.validity),
            dict_id=next_dict_id(),
            dictionary=copy_array(arena, arr.dictionary),
            codes=dup(arr.codes),
        )
    return Array(
        arr.dtype, arr.length, arr.null_count, dup(arr.validity),
        dup(arr.offsets), dup(arr.values), arr.slice_offset,
    )


def copy_column(arena: MemArena, col: Column) -> Column:
    return Column([copy_array(arena, c) for c in col.chunks])


# ------------------------------------------------------------------ filter


def mask_from_bools(arena: MemArena, flags: Sequence[bool]) -> Mask:
    flags = list(flags)
    return Mask(arena.alloc(pack_bits(flags)), len(flags), sum(flags))


def filter_rows(arena: MemArena, t: Table, mask: Mask) -> Table:
    if mask.length != t.nrows:
        raise SchemaMismatch(f"mask has {mask.length} rows, table has {t.nrows}")
    keep = unpack_bits(arena.read(mask.bits), mask.length)
    idx = np.nonzero(keep)[0]
    return gather_table(arena, t, idx)


def sort_by(arena: MemArena, t: Table, col: str, ascending: bool = True) -> Table:
    try:
        i = t.schema.index(col)
    except KeyError:
        raise UnknownColumn(col) from None
    key_col = combine_chunks(arena, t.columns[i])
    key_arr = key_col.one()
    if key_arr.null_count == 0 and key_arr.dtype in NUMERIC and not key_arr.dict_encoded:
        data = arena.read_np(key_arr.values, _NP[key_arr.dtype], key_arr.length)
        perm = np.argsort(-data if not ascending else data, kind="stable")
    else:
        values = array_values(arena, key_arr)
        non_null = [j for j, v in enumerate(values) if v is not None]
        non_null.sort(key=lambda j: values[j], reverse=not ascending)  # stable
        nulls = [j for j, v in enumerate(values) if v is None]
        perm = np.asarray(non_null + nulls, dtype=np.int64)
    return gather_table(arena, t, perm)


def gather_table(arena: MemArena, t: Table, idx: np.ndarray) -> Table:
    cols = [Column([gather_array(arena, combine_chunks(arena, c).one(), idx)]) for c in t.columns]
    return Table(t.schema, cols, len(idx))


def gather_array(arena: MemArena, arr: Array, idx: np.ndarray) -> Array:
    n = len(idx)
    validity, nulls = None, 0
    if arr.null_count:
        bits = unpack_bits(arena.read(arr.validity), arr.length)[idx]
        nulls = int(n - bits.sum())
        if nulls:
            validity = arena.alloc(pack_bits(bits))
    if arr.dict_encoded:
        # dictionary sharing: the dictionary array is reused by identity,
        # only a fresh codes buffer is gathered
        codes = arena.read_np(arr.codes, "<i4", arr.length)[idx]
        return Array(
            arr.dtype, n, nulls, validity,
            dict_id=arr.dict_id, dictionary=arr.dictionary,
            codes=arena.alloc_np(codes) if n else None,
        )
    if arr.dtype in NUMERIC:
        data = arena.read_np(arr.values, _NP[arr.dtype], arr.length)[idx]
        return Array(arr.dtype, n, nulls, validity, None, arena.alloc_np(data) if n else None)
    if arr.dtype is DType.UTF8:
        offsets = arena.read_np(arr.offsets, "<i8", arr.length + 1, arr.slice_offset * 8)
        base = int(offsets[0])
        payload = (
            arena.read(arr.values, base, int(offsets[-1]) - base)
            if offsets[-1] > base
            else b""
        )
        parts = [payload[int(offsets[j]) - base : int(offsets[j + 1]) - base] for j in idx]
        lengths = np.fromiter((len(p) for p in parts), dtype=np.int64, count=n)
        new_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lengths, out=new_offsets[1:])
        data = b"".join(parts)
        return Array(
            arr.dtype, n, nulls, validity,
            arena.alloc_np(new_offsets), arena.alloc(data) if data else None,
        )
    if arr.dtype is DType.BOOL:
        bits = unpack_bits(arena.read(arr.values), arr.length)[idx]
        return Array(
            arr.dtype, n, nulls, validity, None,
            arena.alloc(pack_bits(bits)) if n else None,
        )
    raise TypeError(arr.dtype)
