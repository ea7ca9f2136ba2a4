"""Whole-table kernels used by the benchmark workloads."""

from __future__ import annotations

import numpy as np

from ..errors import SingularSystem, UnknownColumn
from .arena import MemArena
from .ops import (
    NUMERIC,
    _NP,
    array_values,
    combine_chunks,
    gather_table,
    make_array,
)
from .types import Array, Column, DType, Field, Schema, Table, field_for


def upper(arena: MemArena, t: Table, col: str) -> Table:
    """Upper-case one UTF8 column. Case mapping can change UTF-8 byte widths,
    so both offsets and values are always rebuilt; the other columns ride
    along untouched."""
    try:
        i = t.schema.index(col)
    except KeyError:
        raise UnknownColumn(col) from None
    src = combine_chunks(arena, t.columns[i]).one()
    if src.dtype is not DType.UTF8:
        raise TypeError(f"column {col} is not UTF8")
    values = array_values(arena, src)
    validity = None
    if src.null_count:
        validity = [v is not None for v in values]
    out = make_array(
        arena, DType.UTF8, [(v or "").upper() for v in values], validity
    )
    cols = list(t.columns)
    cols[i] = Column([out])
    return Table(t.schema, cols, t.nrows)


def matmul(arena: MemArena, t: Table, matrix: list[list[float]]) -> Table:
    """Multiply the table's numeric columns (as a row-major matrix) by the
    given matrix; output has one FLOAT64 column per matrix column."""
    feats = [
        (f, c) for f, c in zip(t.schema.fields, t.columns)
        if f.dtype in NUMERIC and not f.dict_encoded
    ]
    if not feats:
        raise TypeError("matmul needs at least one numeric column")
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != len(feats):
        raise TypeError(
            f"matrix has {m.shape} shape, table has {len(feats)} numeric columns"
        )
    x = np.empty((t.nrows, len(feats)), dtype=np.float64)
    for j, (f, col) in enumerate(feats):
        arr = combine_chunks(arena, col).one()
        x[:, j] = arena.read_np(arr.values, _NP[arr.dtype], arr.length)
    y = x @ m
    fields, cols = [], []
    for j in range(m.shape[1]):
        buf = arena.alloc_np(np.ascontiguousarray(y[:, j]))
        fields.append(Field(f"m{j}", DType.FLOAT64))
        cols.append(Column([Array(DType.FLOAT64, t.nrows, values=buf)]))
    return Table(Schema(fields), cols, t.nrows)


def ols_fit_predict(arena: MemArena, t: Table, features: list[str], label: str) -> Table:
    """Train ordinary least squares (normal equations, with intercept) on
    even-index rows, predict on odd-index rows. Output is the test rows plus
    a prediction column."""
    x_cols = []
    for name in features:
        arr = combine_chunks(arena, t.column(name)).one()
        if arr.dtype not in NUMERIC or arr.dict_encoded:
            raise TypeError(f"feature {name} is not numeric")
        x_cols.append(arena.read_np(arr.values, _NP[arr.dtype], arr.length).astype(np.float64))
    label_arr = combine_chunks(arena, t.column(label)).one()
    if label_arr.dtype not in NUMERIC:
        raise TypeError(f"label {label} is not numeric")
    y = arena.read_np(label_arr.values, _NP[label_arr.dtype], label_arr.length).astype(np.float64)
    x = np.column_stack(x_cols + [np.ones(t.nrows)])
    train, test = np.arange(0, t.nrows, 2), np.arange(1, t.nrows, 2)
    xt = x[train]
    xtx = xt.T @ xt
    try:
        beta = np.linalg.solve(xtx, xt.T @ y[train])
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    pred = x[test] @ beta
    out = gather_table(arena, t, test)
    fields = list(out.schema.fields) + [Field("prediction", DType.FLOAT64)]
    cols = list(out.columns) + [
        Column([Array(DType.FLOAT64, len(test), values=arena.alloc_np(pred))])
    ]
    return Table(Schema(fields), cols, len(test))


def sum_all(arena: MemArena, t: Table) -> int:
    """Sum every INT64 column; nulls contribute zero."""
    total = 0
    for f, col in zip(t.schema.fields, t.columns):
        if f.dtype is not DType.INT64 or f.dict_encoded:
            continue
        for chunk in col.chunks:
            data = arena.read_np(chunk.values, "<i8", chunk.length)
            if chunk.null_count:
                vals = array_values(arena, chunk)
                total += sum(v for v in vals if v is not None)
            else:
                total += int(data.sum())
    return total
