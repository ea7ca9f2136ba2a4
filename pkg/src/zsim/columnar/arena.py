"""Bridges columnar buffers to the memory substrate.

An arena pairs a store with the account that gets charged for allocations.
Buffers allocate one region each, so a buffer's backing offset is the byte
offset within its own region and de-anonymization ranges never collide
between unrelated buffers.
"""

from __future__ import annotations

import numpy as np

from ..mem import Store, Account
from .types import ANON, SEG, Buffer


class MemArena:
    def __init__(self, store: Store, account: Account):
        self.store = store
        self.account = account

    def alloc(self, data: bytes) -> Buffer:
        region = self.store.alloc_anon(self.account, len(data))
        self.store.write_anon(region.id, 0, data)
        return Buffer(len(data), (ANON, region.id, 0))

    def read(self, buf: Buffer, offset: int = 0, length: int = None) -> bytes:
        if length is None:
            length = buf.len - offset
        kind, cid, base = buf.backing
        if kind == ANON:
            return self.store.read_anon(cid, base + offset, length, reader=self.account)
        return self.store.read_segment(cid, base + offset, length, reader=self.account)

    def read_np(self, buf: Buffer, dtype, count: int, byte_offset: int = 0) -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self.read(buf, byte_offset, count * dt.itemsize)
        return np.frombuffer(raw, dtype=dt)

    def alloc_np(self, arr: np.ndarray) -> Buffer:
        return self.alloc(np.ascontiguousarray(arr).tobytes())
