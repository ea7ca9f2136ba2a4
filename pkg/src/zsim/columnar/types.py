"""Columnar in-memory model: buffers with provenance, arrays, tables.

Every buffer knows where its bytes physically live: anonymous memory
(a region) or a shared segment. Compute ops preserve that provenance so the
IPC writer can recognize input/output overlap and emit references instead
of copies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..errors import SchemaMismatch

_buffer_ids = itertools.count(1)
_dict_ids = itertools.count(1)


class DType(Enum):
    INT64 = "int64"
    FLOAT64 = "float64"
    UTF8 = "utf8"
    BOOL = "bool"

    @property
    def fixed_width(self) -> Optional[int]:
        """Bytes per element for fixed-width types; None for UTF8/BOOL
        (BOOL is bit-packed)."""
        if self in (DType.INT64, DType.FLOAT64):
            return 8
        return None


# backing tuples: ("anon", region_id, byte_offset) | ("seg", segment_id, byte_offset)
ANON = "anon"
SEG = "seg"


@dataclass
class Buffer:
    len: int
    backing: tuple
    id: int = field(default_factory=lambda: next(_buffer_ids))
    immutable: bool = False

    def root(self) -> tuple:
        """(kind, container_id) identity of the physical backing."""
        return self.backing[0], self.backing[1]

    def shifted(self, delta: int, length: int) -> "Buffer":
        """View over a sub-range; same backing container, advanced offset."""
        kind, cid, off = self.backing
        if delta < 0 or delta + length > self.len:
            raise ValueError("sub-view outside buffer bounds")
        return Buffer(length, (kind, cid, off + delta), immutable=self.immutable)


@dataclass
class Array:
    """One contiguous chunk of a column."""

    dtype: DType
    length: int
    null_count: int = 0
    validity: Optional[Buffer] = None  # bitmap, 1 bit/row, window-local
    offsets: Optional[Buffer] = None  # i64 x (parent rows + 1), UTF8 only
    values: Optional[Buffer] = None
    slice_offset: int = 0  # logical element offset into offsets/values
    dict_id: Optional[int] = None
    dictionary: Optional["Array"] = None
    codes: Optional[Buffer] = None  # i32 per row when dict-encoded

    @property
    def dict_encoded(self) -> bool:
        return self.dictionary is not None

    def buffers(self) -> list[tuple[str, Buffer]]:
        """(role, buffer) pairs in serialization order."""
        out = []
        if self.validity is not None:
            out.append(("validity", self.validity))
        if self.offsets is not None:
            out.append(("offsets", self.offsets))
        if self.values is not None:
            out.append(("values", self.values))
        if self.codes is not None:
            out.append(("codes", self.codes))
        return out


@dataclass
class Column:
    """A logical column: one or more chunks stacked vertically."""

    chunks: list[Array]

    @property
    def length(self) -> int:
        return sum(c.length for c in self.chunks)

    @property
    def dtype(self) -> DType:
        return self.chunks[0].dtype

    def one(self) -> Array:
        if len(self.chunks) != 1:
            raise ValueError("operation requires a single-chunk column")
        return self.chunks[0]


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DType
    dict_encoded: bool = False
    nullable: bool = False


@dataclass
class Schema:
    fields: list[Field]

    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise KeyError(name)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.fields == other.fields

    def __len__(self):
        return len(self.fields)


@dataclass
class Table:
    schema: Schema
    columns: list[Column]
    nrows: int

    def __post_init__(self):
        if len(self.schema.fields) != len(self.columns):
            raise SchemaMismatch("schema arity does not match column count")
        for f, col in zip(self.schema.fields, self.columns):
            if col.length != self.nrows:
                raise SchemaMismatch(
                    f"column {f.name} has {col.length} rows, table has {self.nrows}"
                )

    def column(self, name: str) -> Column:
        return self.columns[self.schema.index(name)]

    @staticmethod
    def from_arrays(schema: Schema, arrays: list) -> "Table":
        cols = [a if isinstance(a, Column) else Column([a]) for a in arrays]
        nrows = cols[0].length if cols else 0
        return Table(schema, cols, nrows)


@dataclass
class Mask:
    bits: Buffer
    length: int
    true_count: int


def field_for(name: str, arr: Array, nullable: Optional[bool] = None) -> Field:
    return Field(
        name,
        arr.dtype,
        dict_encoded=arr.dict_encoded,
        nullable=arr.null_count > 0 if nullable is None else nullable,
    )


def next_dict_id() -> int:
    return next(_dict_ids)
