from .types import (
    ANON,
    SEG,
    Array,
    Buffer,
    Column,
    DType,
    Field,
    Mask,
    Schema,
    Table,
    field_for,
)
from .arena import MemArena
from .ops import (
    HORIZONTAL,
    VERTICAL,
    add_columns,
    array_values,
    column_values,
    combine_chunks,
    concat,
    copy_column,
    dict_decode,
    dict_encode,
    filter_rows,
    gather_table,
    make_array,
    mask_from_bools,
    pack_bits,
    project,
    slice_table,
    sort_by,
    table_values,
    unpack_bits,
)
from .kernels import matmul, ols_fit_predict, sum_all, upper

__all__ = [
    "ANON", "SEG", "Array", "Buffer", "Column", "DType", "Field", "Mask",
    "Schema", "Table", "field_for", "MemArena", "HORIZONTAL", "VERTICAL",
    "add_columns", "array_values", "column_values", "combine_chunks", "concat",
    "copy_column", "dict_decode", "dict_encode", "filter_rows", "gather_table",
    "make_array", "mask_from_bools", "pack_bits", "project", "slice_table",
    "sort_by", "table_values", "unpack_bits", "matmul", "ols_fit_predict",
    "sum_all", "upper",
]
