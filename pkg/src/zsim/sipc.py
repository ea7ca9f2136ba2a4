"""SIPC: a columnar IPC container that stores segment references, not data.

Write path: schemas and array metadata are copied into the sink as usual;
record and dictionary data buffers are either
  (a) reshared: resolved against the ShareMap built while reading inputs,
      emitting a reference to the existing segment (zero work),
  (b) de-anonymized: transferred page-wise into a per-column segment (one
      extra segment is shared by all dictionaries), or
  (c) inlined: buffers smaller than one page ride in the file itself
      (validity bitmaps, typically); inlining is a real copy and is counted.

Baseline mode ("writer copy") disables (a) and (b): every buffer is copied
into per-column sink segments, so the copy shows up both in bytes_copied and
in the owner's memory charging. The file layout is identical either way.

Layout (little-endian):

    magic "SIPC1\\0", u16 version = 1, u16 flags (bit0 = baseline write)
    u32 schema_len, schema block (see wire.py)
    u32 n_messages
    per message:
        u8 msg_type {0 = record batch, 1 = dict batch}
        dict batch only: u32 dict_id (file-local, k-th dict column gets k)
        u32 n_arrays
        per array: u8 type_tag, u64 length, u64 null_count, u64 slice_offset,
                   u8 n_buffers
        per buffer: u8 role {0=validity, 1=offsets, 2=values, 3=codes},
                    u8 kind {0=inline, 1=segref}
                    inline: u64 len, payload padded to 8 bytes
                    segref: u64 segment_id, u64 offset, u64 length
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .columnar import Array, Column, DType, Schema, Table
from .columnar.types import ANON, SEG, Buffer, next_dict_id
from .errors import ParseError
from .mem import SegRef, Store
from .wire import TAG_TYPES, TYPE_TAGS, decode_schema, encode_schema

MAGIC = b"SIPC1\x00"
VERSION = 1
FLAG_BASELINE = 1

MSG_RECORD_BATCH = 0
MSG_DICT_BATCH = 1

ROLE_VALIDITY = 0
ROLE_OFFSETS = 1
ROLE_VALUES = 2
ROLE_CODES = 3
_ROLES = {"validity": ROLE_VALIDITY, "offsets": ROLE_OFFSETS, "values": ROLE_VALUES, "codes": ROLE_CODES}

KIND_INLINE = 0
KIND_SEGREF = 1


class SipcFile:
    """Immutable container; parsing is cheap and cached."""

    def __init__(self, data: bytes):
        self.data = data
        self._parsed = None

    def __len__(self):
        return len(self.data)

    def parsed(self) -> "ParsedFile":
        if self._parsed is None:
            self._parsed = parse(self.data)
        return self._parsed


@dataclass
class ParsedBuffer:
    role: int
    kind: int
    payload: bytes = b""
    ref: SegRef = None


@dataclass
class ParsedArray:
    type_tag: int
    length: int
    null_count: int
    slice_offset: int
    buffers: list


@dataclass
class ParsedMessage:
    msg_type: int
    dict_id: int
    arrays: list


@dataclass
class ParsedFile:
    version: int
    flags: int
    fields: list
    messages: list


class ShareMap:
    """Where this process mapped input data: buffer identity -> SegRef plus
    per-segment byte intervals, so sub-views of mapped ranges reshare too.
    Owns the read-side views; release() drops their refcounts."""

    def __init__(self):
        self.by_buffer: dict[int, SegRef] = {}
        self.by_segment: dict[int, list[tuple[int, int]]] = {}
        self.views: list = []

    def add(self, buf: Buffer, ref: SegRef, view=None):
        self.by_buffer[buf.id] = ref
        self.by_segment.setdefault(ref.segment_id, []).append((ref.offset, ref.length))
        if view is not None:
            self.views.append(view)

    def merge(self, other: "ShareMap"):
        self.by_buffer.update(other.by_buffer)
        for seg, spans in other.by_segment.items():
            self.by_segment.setdefault(seg, []).extend(spans)
        self.views.extend(other.views)

    def resolve(self, buf: Buffer) -> SegRef | None:
        ref = self.by_buffer.get(buf.id)
        if ref is not None:
            return ref
        kind, cid, off = buf.backing
        if kind != SEG:
            return None
        for lo, length in self.by_segment.get(cid, ()):
            if lo <= off and off + buf.len <= lo + length:
                return SegRef(cid, off, buf.len)
        return None

    def release(self, store: Store):
        for view in self.views:
            store.release(view)
        self.views.clear()


@dataclass
class SharingReport:
    refs: dict = field(default_factory=dict)  # segment_id -> [(offset, length)]
    new_segments: list = field(default_factory=list)
    inline_bytes: int = 0

    def add_ref(self, ref: SegRef):
        self.refs.setdefault(ref.segment_id, []).append((ref.offset, ref.length))

    def total_referenced_bytes(self) -> int:
        return sum(length for spans in self.refs.values() for _, length in spans)

    def new_output_bytes(self) -> int:
        """Bytes materialized by this write: ranges referencing segments the
        write created, plus inline payloads."""
        fresh = set(self.new_segments)
        new = sum(
            length
            for seg, spans in self.refs.items()
            if seg in fresh
            for _, length in spans
        )
        return new + self.inline_bytes

    def physical_bytes(self) -> int:
        return self.total_referenced_bytes() + self.inline_bytes

    def segments(self) -> list[int]:
        return list(self.refs)


# ------------------------------------------------------------------- write


def write(
    t: Table,
    store: Store,
    sharemap: ShareMap | None,
    account,
    baseline: bool = False,
) -> tuple[SipcFile, SharingReport]:
    ps = store.cfg.page_size
    report = SharingReport()
    n_batches = _batch_structure(t)

    # Dictionary batches come first, one per dict-encoded column, file-local
    # ids in column order. Chunks of one column share a dictionary.
    dict_cols = [i for i, f in enumerate(t.schema.fields) if t.columns[i].chunks[0].dict_encoded]

    plan: list[tuple[Buffer, int, int, bool]] = []  # buffer, role, col idx, is_dict
    arrays_in_order: list[Array] = []

    def stage(arr: Array, col_idx: int, is_dict: bool):
        for role_name, buf in arr.buffers():
            plan.append((buf, _ROLES[role_name], col_idx, is_dict))
        arrays_in_order.append(arr)

    for k in dict_cols:
        stage(t.columns[k].chunks[0].dictionary, k, True)
    for b in range(n_batches):
        for i, col in enumerate(t.columns):
            stage(col.chunks[b], i, False)

    col_segments: dict[int, int] = {}
    dict_segment: list[int] = []  # lazily created, at most one

    def sink_segment(col_idx: int, is_dict: bool) -> int:
        if is_dict:
            if not dict_segment:
                seg = store.new_segment(account)
                dict_segment.append(seg)
                report.new_segments.append(seg)
            return dict_segment[0]
        seg = col_segments.get(col_idx)
        if seg is None:
            seg = store.new_segment(account)
            col_segments[col_idx] = seg
            report.new_segments.append(seg)
        return seg

    # slot_refs[i] is plan[i]'s segment reference, or None for inline.
    slot_refs: list[SegRef | None] = [None] * len(plan)
    inline_payloads: dict[int, bytes] = {}

    if baseline:
        # writer-copy path: every buffer occurrence is copied out, no
        # resharing, no de-anonymization
        for i, (buf, role, col_idx, is_dict) in enumerate(plan):
            data = _read_buffer(store, buf)
            slot_refs[i] = store.append_copy(sink_segment(col_idx, is_dict), data)
    else:
        # Prefetch payloads of inline candidates before de-anonymization can
        # retire their region pages (a sibling view may cover them).
        for buf, _, _, _ in plan:
            if (
                buf.backing[0] == ANON
                and buf.len < ps
                and buf.id not in inline_payloads
                and (sharemap is None or sharemap.resolve(buf) is None)
            ):
                inline_payloads[buf.id] = _read_buffer(store, buf)

        # Group remaining anonymous buffers by region and de-anonymize each
        # region's covering range once; every buffer derives its reference
        # from the covering SegRef. Grouping keeps overlapping views (chunk
        # reuse, slices of one parent) from double-transferring pages.
        groups: dict[int, list] = {}
        for buf, role, col_idx, is_dict in plan:
            if buf.backing[0] != ANON or buf.id in inline_payloads:
                continue
            if sharemap is not None and sharemap.resolve(buf) is not None:
                continue
            groups.setdefault(buf.backing[1], []).append((buf, col_idx, is_dict))
        region_refs: dict[int, tuple[int, SegRef]] = {}
        for region_id, members in groups.items():
            lo = min(b.backing[2] for b, _, _ in members)
            hi = max(b.backing[2] + b.len for b, _, _ in members)
            _, col_idx, is_dict = members[0]
            ref = store.deanon(sink_segment(col_idx, is_dict), region_id, lo, hi)
            region_refs[region_id] = (lo, ref)

        mutated: set[int] = set()
        for i, (buf, role, col_idx, is_dict) in enumerate(plan):
            ref = sharemap.resolve(buf) if sharemap is not None else None
            if ref is None and buf.backing[0] == ANON and buf.backing[1] in region_refs:
                lo, cover = region_refs[buf.backing[1]]
                ref = SegRef(
                    cover.segment_id, cover.offset + (buf.backing[2] - lo), buf.len
                )
                if buf.id not in mutated:
                    # the caller can keep reading its table through the segment
                    buf.backing = (SEG, ref.segment_id, ref.offset)
                    buf.immutable = True
                    mutated.add(buf.id)
            if ref is None and buf.backing[0] == SEG:
                # already segment-backed (e.g. read outside the sharemap);
                # reference it directly rather than copying
                ref = SegRef(buf.backing[1], buf.backing[2], buf.len)
            slot_refs[i] = ref

    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", VERSION, FLAG_BASELINE if baseline else 0)
    schema_bytes = encode_schema(t.schema.fields)
    out += struct.pack("<I", len(schema_bytes)) + schema_bytes
    out += struct.pack("<I", len(dict_cols) + n_batches)

    plan_pos = 0
    emit_pos = 0

    def emit_array(arr: Array):
        nonlocal plan_pos
        bufs = arr.buffers()
        out.extend(
            struct.pack(
                "<BQQQB",
                TYPE_TAGS[arr.dtype],
                arr.length,
                arr.null_count,
                arr.slice_offset,
                len(bufs),
            )
        )
        for role_name, buf in bufs:
            ref = slot_refs[plan_pos]
            role = plan[plan_pos][1]
            plan_pos += 1
            if ref is not None:
                out.extend(struct.pack("<BB", role, KIND_SEGREF))
                out.extend(struct.pack("<QQQ", ref.segment_id, ref.offset, ref.length))
                report.add_ref(ref)
            else:
                payload = inline_payloads.get(buf.id)
                if payload is None:
                    payload = _read_buffer(store, buf)
                out.extend(struct.pack("<BB", role, KIND_INLINE))
                out.extend(struct.pack("<Q", len(payload)))
                out.extend(payload)
                out.extend(b"\x00" * (-len(payload) % 8))
                report.inline_bytes += len(payload)
                store.note_copied(len(payload))

    for pos in range(len(dict_cols)):
        out.extend(struct.pack("<B", MSG_DICT_BATCH))
        out.extend(struct.pack("<I", pos))
        out.extend(struct.pack("<I", 1))
        emit_array(arrays_in_order[emit_pos])
        emit_pos += 1
    for _ in range(n_batches):
        out.extend(struct.pack("<B", MSG_RECORD_BATCH))
        out.extend(struct.pack("<I", len(t.columns)))
        for _ in t.columns:
            emit_array(arrays_in_order[emit_pos])
            emit_pos += 1

    return SipcFile(bytes(out)), report


def _batch_structure(t: Table) -> int:
    counts = {len(c.chunks) for c in t.columns}
    if len(counts) > 1:
        raise ParseError(f"ragged chunking across columns: {sorted(counts)}")
    n = counts.pop() if counts else 1
    for b in range(n):
        lengths = {c.chunks[b].length for c in t.columns}
        if len(lengths) > 1:
            raise ParseError(f"batch {b} has ragged chunk lengths {sorted(lengths)}")
    return n


def _read_buffer(store: Store, buf: Buffer) -> bytes:
    kind, cid, off = buf.backing
    if kind == ANON:
        return store.read_anon(cid, off, buf.len)
    return store.read_segment(cid, off, buf.len)


# -------------------------------------------------------------------- read


def parse(data: bytes) -> ParsedFile:
    if data[: len(MAGIC)] != MAGIC:
        raise ParseError("bad magic")
    try:
        pos = len(MAGIC)
        version, flags = struct.unpack_from("<HH", data, pos)
        pos += 4
        if version != VERSION:
            raise ParseError(f"unsupported version {version}")
        (schema_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        fields, schema_end = decode_schema(data, pos)
        if schema_end - pos != schema_len:
            raise ParseError("schema length mismatch")
        pos = schema_end
        (n_messages,) = struct.unpack_from("<I", data, pos)
        pos += 4
        messages = []
        for _ in range(n_messages):
            (msg_type,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dict_id = -1
            if msg_type == MSG_DICT_BATCH:
                (dict_id,) = struct.unpack_from("<I", data, pos)
                pos += 4
            elif msg_type != MSG_RECORD_BATCH:
                raise ParseError(f"unknown message type {msg_type}")
            (n_arrays,) = struct.unpack_from("<I", data, pos)
            pos += 4
            arrays = []
            for _ in range(n_arrays):
                tag, length, null_count, slice_offset, n_buffers = struct.unpack_from(
                    "<BQQQB", data, pos
                )
                pos += 26
                if tag not in TAG_TYPES:
                    raise ParseError(f"unknown type tag {tag}")
                buffers = []
                for _ in range(n_buffers):
                    role, kind = struct.unpack_from("<BB", data, pos)
                    pos += 2
                    if kind == KIND_INLINE:
                        (blen,) = struct.unpack_from("<Q", data, pos)
                        pos += 8
                        payload = data[pos : pos + blen]
                        if len(payload) != blen:
                            raise ParseError("truncated inline payload")
                        pos += blen + (-blen % 8)
                        buffers.append(ParsedBuffer(role, kind, payload=payload))
                    elif kind == KIND_SEGREF:
                        seg, off, blen = struct.unpack_from("<QQQ", data, pos)
                        pos += 24
                        if blen == 0:
                            raise ParseError("zero-length segment reference")
                        buffers.append(ParsedBuffer(role, kind, ref=SegRef(seg, off, blen)))
                    else:
                        raise ParseError(f"unknown buffer kind {kind}")
                arrays.append(ParsedArray(tag, length, null_count, slice_offset, buffers))
            messages.append(ParsedMessage(msg_type, dict_id, arrays))
        if pos != len(data):
            raise ParseError("trailing bytes")
        return ParsedFile(version, flags, fields, messages)
    except struct.error as exc:
        raise ParseError(str(exc)) from None


def read(f: SipcFile, store: Store, account=None) -> tuple[Table, ShareMap]:
    """Reconstruct the table as views over mapped segments, zero bytes copied
    (inline payloads excepted). Each segref descriptor takes one refcount on
    its segment for the lifetime of the returned table's ShareMap."""
    pf = f.parsed()
    sharemap = ShareMap()
    if account is None:
        account = store.create_account("sipc-read")

    inline_parts: list[bytes] = []
    inline_total = 0
    _patch: list[Buffer] = []

    def make_buffer(pb: ParsedBuffer) -> Buffer:
        nonlocal inline_total
        if pb.kind == KIND_SEGREF:
            view = store.map_ref(pb.ref, reader=account)
            buf = Buffer(pb.ref.length, (SEG, pb.ref.segment_id, pb.ref.offset), immutable=True)
            sharemap.add(buf, pb.ref, view)
            return buf
        off = inline_total
        inline_parts.append(pb.payload)
        inline_total += len(pb.payload) + (-len(pb.payload) % 8)
        buf = Buffer(len(pb.payload), (ANON, -1, off))  # region patched below
        _patch.append(buf)
        return buf

    dict_arrays: list[Array] = []
    batches: list[list[Array]] = []
    for msg in pf.messages:
        arrays = [_build_array(pf, pa, make_buffer) for pa in msg.arrays]
        if msg.msg_type == MSG_DICT_BATCH:
            if len(arrays) != 1:
                raise ParseError("dict batch must hold exactly one array")
            dict_arrays.append(arrays[0])
        else:
            batches.append(arrays)

    # Materialize all inline payloads into one anonymous region.
    if inline_total:
        region = store.alloc_anon(account, inline_total)
        blob = bytearray()
        for payload in inline_parts:
            blob += payload
            blob += b"\x00" * (-len(payload) % 8)
        store.write_anon(region.id, 0, bytes(blob))
        store.note_copied(sum(len(p) for p in inline_parts))
        for buf in _patch:
            buf.backing = (ANON, region.id, buf.backing[2])

    dict_fields = [i for i, fl in enumerate(pf.fields) if fl.dict_encoded]
    if len(dict_fields) != len(dict_arrays):
        raise ParseError(
            f"{len(dict_fields)} dict columns, {len(dict_arrays)} dict batches"
        )
    dict_for_col = dict(zip(dict_fields, dict_arrays))
    runtime_ids = {i: next_dict_id() for i in dict_fields}

    if not batches:
        raise ParseError("file holds no record batches")
    columns = []
    for i, fl in enumerate(pf.fields):
        chunks = []
        for batch in batches:
            if len(batch) != len(pf.fields):
                raise ParseError("record batch arity mismatch")
            arr = batch[i]
            if i in dict_for_col:
                if arr.codes is None and arr.length > 0:
                    raise ParseError(f"column {fl.name}: dict column without codes")
                arr.dictionary = dict_for_col[i]
                arr.dict_id = runtime_ids[i]
            chunks.append(arr)
        columns.append(Column(chunks))
    nrows = sum(a.length for a in columns[0].chunks) if columns else 0
    return Table(Schema(list(pf.fields)), columns, nrows), sharemap


def _build_array(pf: ParsedFile, pa: ParsedArray, make_buffer) -> Array:
    arr = Array(TAG_TYPES[pa.type_tag], pa.length, pa.null_count, slice_offset=pa.slice_offset)
    for pb in pa.buffers:
        buf = make_buffer(pb)
        if pb.role == ROLE_VALIDITY:
            arr.validity = buf
        elif pb.role == ROLE_OFFSETS:
            arr.offsets = buf
        elif pb.role == ROLE_VALUES:
            arr.values = buf
        elif pb.role == ROLE_CODES:
            arr.codes = buf
        else:
            raise ParseError(f"unknown buffer role {pb.role}")
    return arr


def inspect(f: SipcFile) -> SharingReport:
    """Sharing information from descriptors alone: no store access, no
    refcount changes. Which segments the write created is writer-side
    knowledge, so new_segments stays empty here."""
    pf = f.parsed()
    report = SharingReport()
    for msg in pf.messages:
        for pa in msg.arrays:
            for pb in pa.buffers:
                if pb.kind == KIND_SEGREF:
                    report.add_ref(pb.ref)
                else:
                    report.inline_bytes += len(pb.payload)
    return report
