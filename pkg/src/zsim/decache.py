"""Deduplicating cache of loader outputs, keyed by source and load options.

get_or_begin/finish implement single-flight per key: the first caller gets a
Ticket and runs the load; concurrent callers for the same key block until the
entry is Ready and share the one physical copy. Entries persist at zero
refcount (future workloads may reuse them) and are evicted in LRU order only
under memory pressure, idle entries first and only ever idle entries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional

from .errors import RefcountError, StaleTicket

LOADING = "loading"
READY = "ready"
EVICTED = "evicted"


@dataclass(frozen=True)
class CacheKey:
    source_path: str
    dict_columns: tuple = ()

    @staticmethod
    def of(source_path: str, dict_columns=()) -> "CacheKey":
        return CacheKey(source_path, tuple(sorted(dict_columns)))


@dataclass
class CacheEntry:
    key: CacheKey
    state: str = LOADING
    output: object = None
    report: object = None
    owner_account: Optional[int] = None
    physical_bytes: int = 0
    refcount: int = 0
    last_use: int = 0


@dataclass
class Ticket:
    key: CacheKey
    entry: CacheEntry
    spent: bool = False


@dataclass
class Hit:
    entry: CacheEntry


class DeCache:
    """free_segments: callback invoked with an evicted entry so the caller can
    drop its segments and sandbox account. can_evict: extra veto the resource
    manager supplies; resharing means downstream outputs may still reference a
    cached segment even at zero direct refcount."""

    def __init__(self, free_segments=None, can_evict=None):
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._entries: dict[CacheKey, CacheEntry] = {}
        self._clock = 0
        self._free_segments = free_segments
        self._can_evict = can_evict
        self.loads_begun = 0

    def _touch(self, entry: CacheEntry):
        self._clock += 1
        entry.last_use = self._clock

    def get_or_begin(self, key: CacheKey):
        """Ready -> Hit (refcount +1). Loading -> wait, then Hit. Absent or
        evicted -> Ticket reserving the key (exactly one live Ticket per key)."""
        with self._cond:
            while True:
                entry = self._entries.get(key)
                if entry is None or entry.state == EVICTED:
                    entry = CacheEntry(key)
                    self._entries[key] = entry
                    self._touch(entry)
                    self.loads_begun += 1
                    return Ticket(key, entry)
                if entry.state == READY:
                    entry.refcount += 1
                    self._touch(entry)
                    return Hit(entry)
                self._cond.wait()

    def peek(self, key: CacheKey) -> Optional[CacheEntry]:
        """Current non-evicted entry, no waiting, no refcount change."""
        with self._lock:
            entry = self._entries.get(key)
            if entry is None or entry.state == EVICTED:
                return None
            return entry

    def finish(self, ticket: Ticket, output, report, physical_bytes: int, owner_account=None) -> CacheEntry:
        with self._cond:
            if ticket.spent or self._entries.get(ticket.key) is not ticket.entry:
                raise StaleTicket(f"ticket for {ticket.key} already finished or displaced")
            ticket.spent = True
            entry = ticket.entry
            entry.state = READY
            entry.output = output
            entry.report = report
            entry.physical_bytes = physical_bytes
            entry.owner_account = owner_account
            self._touch(entry)
            self._cond.notify_all()
            return entry

    def abort(self, ticket: Ticket):
        """Failed load: drop the reservation so waiters can retry."""
        with self._cond:
            if not ticket.spent and self._entries.get(ticket.key) is ticket.entry:
                ticket.spent = True
                ticket.entry.state = EVICTED  # parked waiters see it and retry
                del self._entries[ticket.key]
                self._cond.notify_all()

    def pin(self, entry: CacheEntry, delta: int):
        with self._lock:
            if entry.state != READY:
                raise RefcountError(f"pin on {entry.state} entry")
            if entry.refcount + delta < 0:
                raise RefcountError("refcount underflow")
            entry.refcount += delta
            self._touch(entry)

    def evict_idle(self, bytes_needed: int) -> int:
        """Evict zero-refcount Ready entries, least recently used first, until
        bytes_needed are freed or none remain. Pinned entries are untouchable."""
        if bytes_needed <= 0:
            return 0
        freed = 0
        while freed < bytes_needed:
            with self._lock:
                idle = [
                    e
                    for e in self._entries.values()
                    if e.state == READY
                    and e.refcount == 0
                    and (self._can_evict is None or self._can_evict(e))
                ]
                if not idle:
                    break
                victim = min(idle, key=lambda e: e.last_use)
                victim.state = EVICTED
            if self._free_segments is not None:
                self._free_segments(victim)
            freed += victim.physical_bytes
        return freed

    def ready_entries(self) -> list[CacheEntry]:
        with self._lock:
            return [e for e in self._entries.values() if e.state == READY]

    def total_bytes(self) -> int:
        with self._lock:
            return sum(
                e.physical_bytes for e in self._entries.values() if e.state == READY
            )

    def dump(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "source_path": e.key.source_path,
                    "dict_columns": list(e.key.dict_columns),
                    "state": e.state,
                    "refcount": e.refcount,
                    "physical_bytes": e.physical_bytes,
                    "last_use": e.last_use,
                }
                for e in self._entries.values()
            ]
