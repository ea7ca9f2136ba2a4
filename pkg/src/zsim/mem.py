"""User-space model of physical memory, in-memory file segments, and swap.

Data bytes are physically stored once per page in a page pool. Swapping a
page out moves its bytes to a spill store (file or in-memory blob), so
swapped data is genuinely unavailable until swapped back in. All byte and
swap traffic is tracked in deterministic counters; swap I/O additionally
accrues modeled seconds (bytes / configured bandwidth) so experiments are
hardware independent.

Ownership model (cgroup analog): every page is charged to exactly one
account. Anonymous regions charge their creator; de-anonymization transfers
page ownership (and charging) to the target segment's owner. Swap-out
discharges memory and charges swap; swap-in does the reverse, charging the
original owner if its account still exists, else the reader.

The counters track write-path copies (partial-page deanon copies, writer-copy
sink appends, inline payload copies); initial population of fresh anonymous
memory and in-process reads are not copies in this model.
"""

from __future__ import annotations

import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush
from typing import NamedTuple, Optional, Union

from .errors import (
    AlreadyShared,
    BusySegment,
    DanglingRef,
    InvalidConfig,
    OutOfMemory,
    SwapFull,
)

# Entries in regions and segments are tuples:
#   (RESIDENT, page_id) | (SWAPPED, swap_slot) | (GONE,)
# GONE marks region pages whose ownership was transferred by deanon.
RESIDENT = "R"
SWAPPED = "S"
GONE = "X"

UNLIMITED = None


@dataclass
class StoreConfig:
    page_size: int = 4096
    mem_limit: int = 64 * 1024 * 1024
    swap_capacity: int = 1024 * 1024 * 1024
    swap_write_bw: float = 2e9  # bytes/second, modeled clock
    swap_read_bw: float = 3e9
    direct_swap_enabled: bool = True
    swap_path: Optional[str] = None  # None keeps spilled pages in memory
    debug_checksums: bool = False


@dataclass
class MemCounters:
    bytes_copied: int = 0
    bytes_swapped_out: int = 0
    bytes_swapped_in: int = 0
    swap_in_events: int = 0
    deanon_calls: int = 0
    pages_transferred: int = 0
    modeled_swap_seconds: float = 0.0

    def snapshot(self) -> "MemCounters":
        return replace(self)

    def delta(self, since: "MemCounters") -> "MemCounters":
        return MemCounters(
            bytes_copied=self.bytes_copied - since.bytes_copied,
            bytes_swapped_out=self.bytes_swapped_out - since.bytes_swapped_out,
            bytes_swapped_in=self.bytes_swapped_in - since.bytes_swapped_in,
            swap_in_events=self.swap_in_events - since.swap_in_events,
            deanon_calls=self.deanon_calls - since.deanon_calls,
            pages_transferred=self.pages_transferred - since.pages_transferred,
            modeled_swap_seconds=self.modeled_swap_seconds - since.modeled_swap_seconds,
        )

    def as_dict(self) -> dict:
        return {
            "bytes_copied": self.bytes_copied,
            "bytes_swapped_out": self.bytes_swapped_out,
            "bytes_swapped_in": self.bytes_swapped_in,
            "swap_in_events": self.swap_in_events,
            "deanon_calls": self.deanon_calls,
            "pages_transferred": self.pages_transferred,
            "modeled_swap_seconds": self.modeled_swap_seconds,
        }


@dataclass
class Account:
    id: int
    name: str
    mem_charged: int = 0
    swap_charged: int = 0
    limit: Optional[int] = UNLIMITED
    alive: bool = True


@dataclass
class Region:
    id: int
    owner: int
    len: int
    entries: list


@dataclass
class Segment:
    id: int
    owner: int
    len: int = 0
    entries: list = field(default_factory=list)
    refcount: int = 0
    alive: bool = True
    checksums: dict = field(default_factory=dict)  # entry index -> crc32 at transfer


class SegRef(NamedTuple):
    segment_id: int
    offset: int
    length: int


@dataclass
class BufferView:
    """Read-only handle over a segment range; holds one refcount."""

    store: "Store"
    ref: SegRef
    reader: Optional[int] = None
    released: bool = False

    def read(self, offset: int = 0, length: Optional[int] = None) -> bytes:
        if length is None:
            length = self.ref.length - offset
        if offset < 0 or offset + length > self.ref.length:
            raise ValueError("read outside view bounds")
        return self.store.read_segment(
            self.ref.segment_id, self.ref.offset + offset, length, reader=self.reader
        )


class _PageMeta:
    __slots__ = ("owner", "kind", "container", "index")

    def __init__(self, owner, kind, container, index):
        self.owner = owner
        self.kind = kind  # "reg" | "seg"
        self.container = container
        self.index = index


class _SwapSpace:
    """Flat slot store, page_size bytes per slot, backed by a file or a dict."""

    def __init__(self, cfg: StoreConfig):
        self.page_size = cfg.page_size
        self.capacity_slots = cfg.swap_capacity // cfg.page_size
        self._free: list[int] = []
        self._next = 0
        self._owner: dict[int, int] = {}
        self._blob: dict[int, bytes] = {}
        self._file = open(cfg.swap_path, "w+b") if cfg.swap_path else None

    @property
    def used_slots(self) -> int:
        return len(self._owner)

    def has_free(self) -> bool:
        return self.used_slots < self.capacity_slots

    def alloc(self, owner: int) -> int:
        if not self.has_free():
            raise SwapFull(f"all {self.capacity_slots} swap slots in use")
        slot = heappop(self._free) if self._free else self._bump()
        self._owner[slot] = owner
        return slot

    def _bump(self) -> int:
        slot = self._next
        self._next += 1
        return slot

    def write(self, slot: int, data: bytes):
        if self._file is not None:
            self._file.seek(slot * self.page_size)
            self._file.write(data)
        else:
            self._blob[slot] = data

    def read(self, slot: int) -> bytes:
        if self._file is not None:
            self._file.seek(slot * self.page_size)
            return self._file.read(self.page_size)
        return self._blob[slot]

    def owner_of(self, slot: int) -> int:
        return self._owner[slot]

    def reassign(self, slot: int, owner: int):
        self._owner[slot] = owner

    def free(self, slot: int):
        del self._owner[slot]
        self._blob.pop(slot, None)
        heappush(self._free, slot)

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None


class Store:
    """Internally synchronized substrate; every public op is atomic."""

    def __init__(self, cfg: StoreConfig):
        if cfg.page_size <= 0 or cfg.page_size & (cfg.page_size - 1):
            raise InvalidConfig("page_size must be a power of two")
        if cfg.mem_limit <= 0:
            raise InvalidConfig("mem_limit must be positive")
        if cfg.swap_write_bw <= 0 or cfg.swap_read_bw <= 0:
            raise InvalidConfig("swap bandwidths must be positive")
        self.cfg = cfg
        self.counters = MemCounters()
        self._lock = threading.RLock()
        self._next_id = 1  # shared by accounts/regions/segments for easy tracing
        self._next_page = 1
        self._accounts: dict[int, Account] = {}
        self._regions: dict[int, Region] = {}
        self._segments: dict[int, Segment] = {}
        self._pool: dict[int, bytes] = {}
        # Insertion/move order of _lru is the global LRU order, oldest first.
        self._lru: "OrderedDict[int, _PageMeta]" = OrderedDict()
        self._swap = _SwapSpace(cfg)
        self._zero_page = b"\x00" * cfg.page_size

    # ------------------------------------------------------------- accounts

    def create_account(self, name: str = "", limit: Optional[int] = UNLIMITED) -> Account:
        with self._lock:
            acct = Account(self._take_id(), name or "acct", limit=limit)
            self._accounts[acct.id] = acct
            return acct

    def account(self, account_id: int) -> Account:
        return self._accounts[account_id]

    def remove_account(self, account_id: int):
        """Mark an account dead. Swapped charges may linger (cgroup analog);
        resident pages must have been freed or transferred first."""
        with self._lock:
            acct = self._accounts[account_id]
            if acct.mem_charged:
                raise InvalidConfig(
                    f"account {account_id} still owns {acct.mem_charged} resident bytes"
                )
            acct.alive = False

    # -------------------------------------------------------------- regions

    def alloc_anon(self, account: Union[Account, int], nbytes: int) -> Region:
        if nbytes <= 0:
            raise InvalidConfig("allocation length must be positive")
        with self._lock:
            acct = self._resolve_account(account)
            ps = self.cfg.page_size
            npages = -(-nbytes // ps)
            held = len(self._pool) + self._swap.used_slots
            if (held + npages) * ps > self.cfg.mem_limit + self.cfg.swap_capacity:
                raise OutOfMemory(
                    f"{npages} pages exceed mem_limit plus swap capacity"
                )
            region = Region(self._take_id(), acct.id, nbytes, [])
            self._regions[region.id] = region
            for i in range(npages):
                self._make_room(1)
                pid = self._install_page(self._zero_page, acct.id, "reg", region.id, i)
                region.entries.append((RESIDENT, pid))
            return region

    def write_anon(self, region_id: int, offset: int, data: bytes):
        """Fill anonymous memory. Initial population, not a tracked copy."""
        with self._lock:
            region = self._regions[region_id]
            if offset < 0 or offset + len(data) > region.len:
                raise ValueError("write outside region bounds")
            self._write_container(region, "reg", offset, data)

    def read_anon(self, region_id: int, offset: int, length: int, reader=None) -> bytes:
        with self._lock:
            region = self._regions.get(region_id)
            if region is None:
                raise DanglingRef(f"region {region_id} freed")
            if offset < 0 or offset + length > region.len:
                raise ValueError("read outside region bounds")
            return self._read_container(region, "reg", offset, length, reader)

    def free_region(self, region_id: int):
        with self._lock:
            region = self._regions.pop(region_id)
            acct = self._accounts[region.owner]
            for state in region.entries:
                if state[0] == RESIDENT:
                    self._drop_resident(state[1], acct)
                elif state[0] == SWAPPED:
                    self._free_slot(state[1])

    def free_account_regions(self, account_id: int):
        with self._lock:
            doomed = [r.id for r in self._regions.values() if r.owner == account_id]
            for rid in doomed:
                self.free_region(rid)

    # ------------------------------------------------------------- segments

    def new_segment(self, account: Union[Account, int]) -> int:
        with self._lock:
            acct = self._resolve_account(account)
            seg = Segment(self._take_id(), acct.id)
            self._segments[seg.id] = seg
            return seg.id

    def segment(self, segment_id: int) -> Segment:
        seg = self._segments.get(segment_id)
        if seg is None or not seg.alive:
            raise DanglingRef(f"segment {segment_id} deleted or unknown")
        return seg

    def segments_owned_by(self, account_id: int) -> list[int]:
        with self._lock:
            return [
                s.id for s in self._segments.values() if s.alive and s.owner == account_id
            ]

    def deanon(self, segment_id: int, region: Union[Region, int], start: int, end: int) -> SegRef:
        """Transfer ownership of region bytes [start, end) to the segment,
        append-style. Full pages move their page/swap-slot state without
        touching data; partial head/tail pages are copied into fresh segment
        pages, and only those byte counts hit the copied counter."""
        with self._lock:
            seg = self.segment(segment_id)
            if isinstance(region, int):
                region = self._regions[region]
            ps = self.cfg.page_size
            if not (0 <= start < end <= region.len):
                raise ValueError("deanon range outside region")
            first, last = start // ps, (end - 1) // ps
            for k in range(first, last + 1):
                if region.entries[k][0] == GONE:
                    raise AlreadyShared(
                        f"region {region.id} page {k} was already de-anonymized"
                    )
            seg_owner = self._accounts[seg.owner]
            reg_owner = self._accounts[region.owner]
            base = len(seg.entries)
            for k in range(first, last + 1):
                page_lo, page_hi = k * ps, (k + 1) * ps
                state = region.entries[k]
                if page_lo >= start and page_hi <= end:  # full page: transfer
                    if state[0] == SWAPPED and not self.cfg.direct_swap_enabled:
                        state = self._swap_in(region, "reg", k, reader=None)
                    index = len(seg.entries)
                    if state[0] == RESIDENT:
                        pid = state[1]
                        meta = self._lru[pid]
                        meta.owner, meta.kind, meta.container, meta.index = (
                            seg.owner, "seg", seg.id, index,
                        )
                        reg_owner.mem_charged -= ps
                        seg_owner.mem_charged += ps
                        if self.cfg.debug_checksums:
                            seg.checksums[index] = zlib.crc32(self._pool[pid])
                    else:  # direct swap: the swap entry itself moves
                        slot = state[1]
                        self._swap.reassign(slot, seg.owner)
                        reg_owner.swap_charged -= ps
                        seg_owner.swap_charged += ps
                    seg.entries.append(state)
                    region.entries[k] = (GONE,)
                    self.counters.pages_transferred += 1
                else:  # partial head/tail: copy the covered bytes
                    lo, hi = max(start, page_lo), min(end, page_hi)
                    if state[0] == SWAPPED:
                        state = self._swap_in(region, "reg", k, reader=None)
                    src = self._pool[state[1]]
                    chunk = src[lo - page_lo : hi - page_lo]
                    self._make_room(1)
                    page = bytearray(ps)
                    page[lo - page_lo : hi - page_lo] = chunk
                    index = len(seg.entries)
                    pid = self._install_page(bytes(page), seg.owner, "seg", seg.id, index)
                    seg.entries.append((RESIDENT, pid))
                    if self.cfg.debug_checksums:
                        seg.checksums[index] = zlib.crc32(self._pool[pid])
                    self.counters.bytes_copied += hi - lo
            seg.len = len(seg.entries) * ps
            self.counters.deanon_calls += 1
            return SegRef(seg.id, base * ps + (start - first * ps), end - start)

    def append_copy(self, segment_id: int, data: bytes) -> SegRef:
        """Copy bytes into fresh pages at the end of a segment (the writer-copy
        path). The full length counts as copied."""
        with self._lock:
            seg = self.segment(segment_id)
            ps = self.cfg.page_size
            npages = -(-len(data) // ps)
            base = len(seg.entries)
            for i in range(npages):
                chunk = data[i * ps : (i + 1) * ps]
                if len(chunk) < ps:
                    chunk = chunk + b"\x00" * (ps - len(chunk))
                self._make_room(1)
                index = len(seg.entries)
                pid = self._install_page(chunk, seg.owner, "seg", seg.id, index)
                seg.entries.append((RESIDENT, pid))
                if self.cfg.debug_checksums:
                    seg.checksums[index] = zlib.crc32(chunk)
            seg.len = len(seg.entries) * ps
            self.counters.bytes_copied += len(data)
            return SegRef(seg.id, base * ps, len(data))

    def map_ref(self, ref: SegRef, reader: Optional[Union[Account, int]] = None) -> BufferView:
        with self._lock:
            seg = self.segment(ref.segment_id)
            if ref.offset + ref.length > seg.len:
                raise DanglingRef(
                    f"segref beyond segment {ref.segment_id} length {seg.len}"
                )
            seg.refcount += 1
            rid = self._resolve_account(reader).id if reader is not None else None
            return BufferView(self, ref, rid)

    def read_segment(self, segment_id: int, offset: int, length: int, reader=None) -> bytes:
        with self._lock:
            seg = self.segment(segment_id)
            if offset < 0 or offset + length > seg.len:
                raise ValueError("read outside segment bounds")
            return self._read_container(seg, "seg", offset, length, reader)

    def release(self, target: Union[BufferView, int]):
        """Release a view (refcount drop) or delete a segment by id."""
        if isinstance(target, BufferView):
            with self._lock:
                if not target.released:
                    target.released = True
                    seg = self._segments.get(target.ref.segment_id)
                    if seg is not None and seg.alive:
                        seg.refcount -= 1
        else:
            self.delete_segment(target)

    def delete_segment(self, segment_id: int):
        with self._lock:
            seg = self.segment(segment_id)
            if seg.refcount > 0:
                raise BusySegment(f"segment {segment_id} has {seg.refcount} live views")
            acct = self._accounts[seg.owner]
            for index, state in enumerate(seg.entries):
                if state[0] == RESIDENT:
                    if self.cfg.debug_checksums and index in seg.checksums:
                        if zlib.crc32(self._pool[state[1]]) != seg.checksums[index]:
                            raise AssertionError(
                                f"segment {segment_id} page {index} mutated after transfer"
                            )
                    self._drop_resident(state[1], acct)
                elif state[0] == SWAPPED:
                    self._free_slot(state[1])
            seg.entries.clear()
            seg.alive = False

    # ------------------------------------------------------ pressure + swap

    def set_limit(self, account: Union[Account, int], limit: Optional[int]):
        """Drop (or restore) an account's memory limit. Dropping below current
        usage swaps the account's pages out, segment pages first, then region
        pages, LRU order within each class. Raising a limit performs no I/O."""
        with self._lock:
            acct = self._resolve_account(account)
            acct.limit = limit
            if limit is UNLIMITED or acct.mem_charged <= limit:
                return
            for kind in ("seg", "reg"):
                if acct.mem_charged <= limit:
                    break
                victims = [
                    pid
                    for pid, meta in self._lru.items()
                    if meta.owner == acct.id and meta.kind == kind
                ]
                for pid in victims:
                    if acct.mem_charged <= limit:
                        break
                    self._swap_out(pid)

    def reclaim_global(self, bytes_needed: int) -> int:
        """Kernel-swap analog: evict least-recently-used resident pages
        store-wide until bytes_needed are freed."""
        with self._lock:
            if bytes_needed <= 0:
                return 0
            freed = self._reclaim_lru(bytes_needed)
            if freed < bytes_needed:
                raise SwapFull(f"freed only {freed} of {bytes_needed} requested bytes")
            return freed

    def note_copied(self, nbytes: int):
        """Record an out-of-band write-path copy (e.g. inline IPC payloads)."""
        with self._lock:
            self.counters.bytes_copied += nbytes

    # ------------------------------------------------------------- queries

    def stats(self) -> MemCounters:
        with self._lock:
            return self.counters.snapshot()

    def mem_charged(self, account_id: int) -> int:
        return self._accounts[account_id].mem_charged

    def swap_charged(self, account_id: int) -> int:
        return self._accounts[account_id].swap_charged

    def total_resident_bytes(self) -> int:
        with self._lock:
            return len(self._pool) * self.cfg.page_size

    def live_segments(self) -> list[int]:
        with self._lock:
            return [s.id for s in self._segments.values() if s.alive]

    def check_invariants(self):
        """Page conservation, single ownership, charging balance."""
        with self._lock:
            ps = self.cfg.page_size
            seen_pages: set[int] = set()
            seen_slots: set[int] = set()
            per_owner_mem: dict[int, int] = {}
            per_owner_swap: dict[int, int] = {}

            def visit(container, kind, expected_entries):
                assert len(container.entries) == expected_entries, (
                    f"{kind} {container.id}: {len(container.entries)} entries, "
                    f"expected {expected_entries}"
                )
                for state in container.entries:
                    if state[0] == RESIDENT:
                        assert state[1] not in seen_pages, f"page {state[1]} owned twice"
                        seen_pages.add(state[1])
                        meta = self._lru[state[1]]
                        per_owner_mem[meta.owner] = per_owner_mem.get(meta.owner, 0) + ps
                    elif state[0] == SWAPPED:
                        assert state[1] not in seen_slots, f"slot {state[1]} owned twice"
                        seen_slots.add(state[1])
                        owner = self._swap.owner_of(state[1])
                        per_owner_swap[owner] = per_owner_swap.get(owner, 0) + ps

            for region in self._regions.values():
                visit(region, "region", -(-region.len // ps))
            for seg in self._segments.values():
                if seg.alive:
                    visit(seg, "segment", -(-seg.len // ps) if seg.len else 0)
            assert seen_pages == set(self._pool), "pool does not match owned pages"
            for acct in self._accounts.values():
                assert acct.mem_charged == per_owner_mem.get(acct.id, 0), (
                    f"account {acct.id} mem_charged {acct.mem_charged} != "
                    f"{per_owner_mem.get(acct.id, 0)}"
                )
                assert acct.swap_charged == per_owner_swap.get(acct.id, 0), (
                    f"account {acct.id} swap_charged {acct.swap_charged} != "
                    f"{per_owner_swap.get(acct.id, 0)}"
                )

    def close(self):
        self._swap.close()

    # ------------------------------------------------------------ internals

    def _take_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def _resolve_account(self, account: Union[Account, int]) -> Account:
        if isinstance(account, Account):
            return account
        return self._accounts[account]

    def _install_page(self, data: bytes, owner, kind, container, index) -> int:
        pid = self._next_page
        self._next_page += 1
        self._pool[pid] = data
        self._lru[pid] = _PageMeta(owner, kind, container, index)
        self._accounts[owner].mem_charged += self.cfg.page_size
        return pid

    def _drop_resident(self, pid: int, owner: Account):
        del self._pool[pid]
        del self._lru[pid]
        owner.mem_charged -= self.cfg.page_size

    def _free_slot(self, slot: int):
        owner = self._swap.owner_of(slot)
        self._accounts[owner].swap_charged -= self.cfg.page_size
        self._swap.free(slot)

    def _make_room(self, npages: int):
        ps = self.cfg.page_size
        over = (len(self._pool) + npages) * ps - self.cfg.mem_limit
        if over > 0:
            self._reclaim_lru(over)
            if (len(self._pool) + npages) * ps > self.cfg.mem_limit:
                raise OutOfMemory(
                    f"need {npages} pages, resident {len(self._pool)}, "
                    f"limit {self.cfg.mem_limit} and swap exhausted"
                )

    def _reclaim_lru(self, bytes_needed: int) -> int:
        ps = self.cfg.page_size
        freed = 0
        while freed < bytes_needed and self._lru and self._swap.has_free():
            pid = next(iter(self._lru))
            self._swap_out(pid)
            freed += ps
        return freed

    def _swap_out(self, pid: int):
        ps = self.cfg.page_size
        meta = self._lru[pid]
        container = (
            self._regions[meta.container] if meta.kind == "reg" else self._segments[meta.container]
        )
        slot = self._swap.alloc(meta.owner)
        self._swap.write(slot, self._pool[pid])
        container.entries[meta.index] = (SWAPPED, slot)
        owner = self._accounts[meta.owner]
        owner.mem_charged -= ps
        owner.swap_charged += ps
        del self._pool[pid]
        del self._lru[pid]
        self.counters.bytes_swapped_out += ps
        self.counters.modeled_swap_seconds += ps / self.cfg.swap_write_bw

    def _swap_in(self, container, kind: str, index: int, reader: Optional[int]):
        ps = self.cfg.page_size
        slot = container.entries[index][1]
        data = self._swap.read(slot)
        slot_owner = self._swap.owner_of(slot)
        self._free_slot(slot)
        owner_acct = self._accounts[slot_owner]
        charge_to = slot_owner if owner_acct.alive or reader is None else reader
        self._make_room(1)
        pid = self._install_page(data, charge_to, kind, container.id, index)
        container.entries[index] = (RESIDENT, pid)
        self.counters.swap_in_events += 1
        self.counters.bytes_swapped_in += ps
        self.counters.modeled_swap_seconds += ps / self.cfg.swap_read_bw
        return container.entries[index]

    def _read_container(self, container, kind: str, offset: int, length: int, reader) -> bytes:
        ps = self.cfg.page_size
        if length == 0:
            return b""
        reader_id = self._resolve_account(reader).id if reader is not None else None
        first, last = offset // ps, (offset + length - 1) // ps
        parts = []
        for k in range(first, last + 1):
            state = container.entries[k]
            if state[0] == GONE:
                raise DanglingRef(
                    f"region {container.id} page {k} was de-anonymized; "
                    "read it through its segment"
                )
            if state[0] == SWAPPED:
                state = self._swap_in(container, kind, k, reader_id)
            pid = state[1]
            self._lru.move_to_end(pid)
            lo = offset - k * ps if k == first else 0
            hi = offset + length - k * ps if k == last else ps
            parts.append(self._pool[pid][lo:hi])
        return b"".join(parts)

    def _write_container(self, container, kind: str, offset: int, data: bytes):
        ps = self.cfg.page_size
        pos = 0
        while pos < len(data):
            k = (offset + pos) // ps
            state = container.entries[k]
            if state[0] == GONE:
                raise DanglingRef(f"write to de-anonymized page {k}")
            if state[0] == SWAPPED:
                state = self._swap_in(container, kind, k, None)
            pid = state[1]
            in_page = (offset + pos) - k * ps
            take = min(ps - in_page, len(data) - pos)
            if take == ps:
                self._pool[pid] = data[pos : pos + ps]
            else:
                page = bytearray(self._pool[pid])
                page[in_page : in_page + take] = data[pos : pos + take]
                self._pool[pid] = bytes(page)
            self._lru.move_to_end(pid)
            pos += take


def create_store(cfg: StoreConfig) -> Store:
    return Store(cfg)
