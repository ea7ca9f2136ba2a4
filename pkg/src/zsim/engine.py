"""DAG executor: runs node code inside sandbox accounts, wires SIPC reads and
writes around compute, executes RM decisions, and drives workloads to
completion on a worker pool.

A sandbox is purely an accounting boundary here (one store account per node
execution, retained until its DAG completes); node code runs in-process on
worker threads. The coordinator thread owns all RM state; workers only touch
the internally-synchronized store.
"""

from __future__ import annotations

import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pqlite, sipc
from .columnar import (
    Array,
    Column,
    DType,
    Field,
    MemArena,
    Schema,
    Table,
    VERTICAL,
    add_columns,
    concat,
    combine_chunks,
    copy_column,
    field_for,
    filter_rows,
    make_array,
    mask_from_bools,
    matmul,
    ols_fit_predict,
    project,
    slice_table,
    sort_by,
    sum_all,
    upper,
)
from .columnar.ops import _NP
from .decache import DeCache
from .errors import DanglingRef, NodeFailed
from .mem import MemCounters, Store
from .rm import (
    DagSpec,
    Node,
    PolicyConfig,
    ResourceManager,
)


@dataclass
class OutputHandle:
    file: sipc.SipcFile
    report: sipc.SharingReport
    account_id: int
    latency: float
    executed_load: bool = False
    released: bool = False


@dataclass
class MetricsReport:
    counters: MemCounters
    loads_executed: int
    nodes_rerun: int
    deadlocks_resolved: int
    new_output_bytes: int
    makespan_wall_s: float
    makespan_modeled_s: float
    stuck: bool = False
    node_latencies: dict = field(default_factory=dict)
    per_workload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "counters": self.counters.as_dict(),
            "loads_executed": self.loads_executed,
            "nodes_rerun": self.nodes_rerun,
            "deadlocks_resolved": self.deadlocks_resolved,
            "new_output_bytes": self.new_output_bytes,
            "makespan_wall_s": self.makespan_wall_s,
            "makespan_modeled_s": self.makespan_modeled_s,
            "stuck": self.stuck,
        }
        out.update(self.per_workload)
        return out


class Engine:
    def __init__(
        self,
        store: Store,
        policy: PolicyConfig,
        decache_enabled: bool = True,
        sipc_baseline: bool = False,
        parallelism: int = 1,
        trace=None,
        rerun_factor: int = 30,
    ):
        self.store = store
        self.sipc_baseline = sipc_baseline
        self.parallelism = max(1, parallelism)
        self.rerun_factor = rerun_factor
        self.decache = (
            DeCache(
                free_segments=self._evict_cache_entry,
                can_evict=self._cache_entry_unreferenced,
            )
            if decache_enabled
            else None
        )
        self.rm = ResourceManager(
            store, policy, store.cfg.mem_limit, decache=self.decache, trace=trace
        )
        self.rm.rollback_cb = self.rollback
        self.rm.limit_drop_cb = self.limit_drop

    # -------------------------------------------------------- node running

    def run_node(self, node: Node) -> OutputHandle:
        """Read inputs (building the ShareMap), run the node's code, write the
        output through SIPC with that map, release input views."""
        spec = node.spec
        acct = self.store.create_account(f"{node.key}#{node.run_count}")
        t0 = time.perf_counter()
        sharemap = sipc.ShareMap()
        executed_load = False
        try:
            tables = []
            for parent in node.parents:
                tbl, sm = sipc.read(parent.output.file, self.store, acct)
                sharemap.merge(sm)
                tables.append(tbl)
            arena = MemArena(self.store, acct)
            if spec.is_loader:
                _, path, opts = spec.code
                table = pqlite.load_source(self.store, path, opts, acct)
                executed_load = True
            else:
                table = self._compute(arena, spec.code[1], tables)
            out_file, report = sipc.write(
                table, self.store, sharemap, acct, baseline=self.sipc_baseline
            )
        finally:
            sharemap.release(self.store)
        self.store.free_account_regions(acct)  # decode scratch, masks, bitmaps
        latency = time.perf_counter() - t0
        return OutputHandle(out_file, report, acct.id, latency, executed_load)

    def _compute(self, arena: MemArena, op: dict, tables: list[Table]) -> Table:
        kind = op["kind"]
        t = tables[0] if tables else None
        if kind == "project":
            return project(t, op["names"])
        if kind == "slice":
            return slice_table(arena, t, op["start"], op["length"])
        if kind == "concat_self":
            return concat(arena, [t, t], VERTICAL)
        if kind == "concat":
            return concat(arena, tables, op.get("axis", VERTICAL))
        if kind == "add_columns":
            return self._add_columns_scaled(
                arena,
                t,
                op["exprs"],
                op.get("materialize_all", False),
                op.get("units", 1.0),
            )
        if kind == "filter":
            return self._filter(arena, t, op.get("pred", "even_rows"))
        if kind == "sort":
            return sort_by(arena, t, op["col"], op.get("ascending", True))
        if kind == "upper":
            return upper(arena, t, op["col"])
        if kind == "matmul":
            return matmul(arena, t, op["matrix"])
        if kind == "ols":
            return ols_fit_predict(arena, t, op["features"], op["label"])
        if kind == "sum_all":
            total = sum_all(arena, t)
            return Table.from_arrays(
                Schema([Field("sum", DType.INT64)]),
                [make_array(arena, DType.INT64, [total])],
            )
        raise ValueError(f"unknown compute kind {kind!r}")

    def _filter(self, arena: MemArena, t: Table, pred) -> Table:
        if pred == "even_rows":
            mask = mask_from_bools(arena, [i % 2 == 0 for i in range(t.nrows)])
        elif isinstance(pred, (list, tuple)) and pred[0] == "col_mod":
            _, name, k = pred
            col = combine_chunks(arena, t.column(name)).one()
            vals = arena.read_np(col.values, _NP[col.dtype], col.length)
            mask = mask_from_bools(arena, (vals.astype(np.int64) % k == 0).tolist())
        else:
            raise ValueError(f"unknown filter predicate {pred!r}")
        return filter_rows(arena, t, mask)

    def _add_columns_scaled(self, arena, t, exprs, materialize_all, units) -> Table:
        """add_columns whose arithmetic cost scales with `units` while output
        shape stays fixed. units >= 1 repeats the arithmetic; units < 1
        computes a leading fraction of rows and tiles it."""
        if units == 1.0:
            return add_columns(arena, t, exprs, materialize_all)
        fields = list(t.schema.fields)
        cols = list(t.columns)
        rows = t.nrows
        for name, (opname, a, b) in exprs:
            xa = self._operand(arena, t, a)
            xb = self._operand(arena, t, b)
            if units < 1.0:
                n = max(1, int(rows * units))
                part = self._binop(opname, xa[:n], xb[:n])
                reps = -(-rows // n)
                data = np.tile(part, reps)[:rows]
            else:
                data = self._binop(opname, xa, xb)
                whole = int(units)
                for _ in range(whole - 1):
                    self._binop(opname, xa, xb)
                frac = units - whole
                if frac > 0:
                    n = max(1, int(rows * frac))
                    self._binop(opname, xa[:n], xb[:n])
            dtype = DType.INT64 if data.dtype == np.int64 else DType.FLOAT64
            arr = Array(dtype, rows, values=arena.alloc_np(data))
            fields.append(field_for(name, arr, nullable=False))
            cols.append(Column([arr]))
        result = Table(Schema(fields), cols, rows)
        if materialize_all:
            result = Table(
                result.schema,
                [copy_column(arena, c) for c in result.columns],
                result.nrows,
            )
        return result

    def _operand(self, arena, t, name):
        col = combine_chunks(arena, t.column(name)).one()
        return arena.read_np(col.values, _NP[col.dtype], col.length)

    @staticmethod
    def _binop(opname, a, b):
        if opname == "add":
            return a + b
        if opname == "sub":
            return a - b
        if opname == "mul":
            return a * b
        raise ValueError(f"unknown op {opname!r}")

    # -------------------------------------------------- eviction mechanisms

    def rollback(self, node: Node) -> int:
        """Delete the victim's outputs (dependency sets keep shared segments
        alive) and demote it for re-execution. Returns bytes of budget
        recovered."""
        before = self.rm.available_memory()
        self.rm.rollback_bookkeeping(node)
        self.rm.release_sandbox(node)
        return self.rm.available_memory() - before

    def limit_drop(self, node: Node) -> int:
        """Swap out a completed node's output by dropping its sandbox limit to
        zero, then restoring it."""
        acct = node.account_id
        if acct is None:
            return 0
        before = self.store.stats().bytes_swapped_out
        previous = self.store.account(acct).limit
        self.store.set_limit(acct, 0)
        self.store.set_limit(acct, previous)
        return self.store.stats().bytes_swapped_out - before

    def _cache_entry_unreferenced(self, entry) -> bool:
        """Resharing can keep cached columns alive through downstream outputs;
        the dependency sets built from IPC inspection are the authority."""
        if entry.report is None:
            return False
        return all(
            not self.rm.seg_deps.get(seg) for seg in entry.report.new_segments
        )

    def _evict_cache_entry(self, entry):
        """DeCache eviction: drop the entry's segments and sandbox."""
        if entry.output is not None:
            entry.output.released = True
        for seg in entry.report.new_segments if entry.report else ():
            self.rm.cache_segments.discard(seg)
            self.rm.seg_deps.pop(seg, None)
            try:
                self.store.delete_segment(seg)
            except DanglingRef:
                pass
        acct = entry.owner_account
        if acct is not None:
            self.store.free_account_regions(acct)
            if (
                self.store.mem_charged(acct) == 0
                and self.store.swap_charged(acct) == 0
            ):
                self.store.remove_account(acct)
            else:
                self.rm.orphan_accounts.add(acct)
        self.rm.trace({"event": "uncache_entry", "key": entry.key.source_path})

    # ------------------------------------------------------------ driving

    def run_to_completion(self, dags: list[DagSpec]) -> MetricsReport:
        rm = self.rm
        for dag in dags:
            rm.submit(dag)
        counters0 = self.store.stats()
        wall0 = time.perf_counter()
        done_q: "queue.Queue" = queue.Queue()
        inflight = 0

        def worker(node: Node):
            try:
                handle = self.run_node(node)
                done_q.put((node, handle, None))
            except BaseException as exc:  # surfaced as NodeFailed by the driver
                done_q.put((node, None, exc))

        total_nodes = sum(len(d.nodes) for d in dags)
        rerun_budget = self.rerun_factor * total_nodes if self.rerun_factor else None

        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            while True:
                if rerun_budget is not None and rm.nodes_rerun > rerun_budget:
                    # livelock valve: an infeasible workload keeps restarting
                    # the same frontier; report it stuck instead of spinning
                    rm._mark_stuck(f"rerun budget {rerun_budget} exhausted")
                    if inflight == 0:
                        break
                rm.pump_cache_waiters()
                actions = rm.tick() if not rm.stuck else []
                started = 0
                for action in actions:
                    if action.kind in ("start", "overcommit"):
                        dag_id, node_id = action.node.split(":", 1)
                        node = next(
                            d for d in rm.dags if d.spec.id == dag_id
                        ).nodes[node_id]
                        pool.submit(worker, node)
                        inflight += 1
                        started += 1
                if rm.all_done():
                    break
                if inflight == 0:
                    if rm.stuck:
                        break
                    if started == 0:
                        if rm.pump_cache_waiters():
                            continue
                        rm._mark_stuck("no runnable work and nothing in flight")
                        break
                    continue
                node, handle, err = done_q.get()
                while True:
                    inflight -= 1
                    if err is not None:
                        if node.ticket is not None:
                            self.decache.abort(node.ticket)
                            node.ticket = None
                        raise NodeFailed(node.key, err) from err
                    if handle.executed_load:
                        rm.on_load_executed()
                    rm.on_node_complete(node, handle, handle.latency)
                    try:
                        node, handle, err = done_q.get_nowait()
                    except queue.Empty:
                        break

        wall = time.perf_counter() - wall0
        delta = self.store.stats().delta(counters0)
        latencies = {
            n.key: n.measured_latency
            for dag in rm.dags
            for n in dag.nodes.values()
            if n.run_count > 0 or n.cache_entry is not None
        }
        return MetricsReport(
            counters=delta,
            loads_executed=rm.loads_executed,
            nodes_rerun=rm.nodes_rerun,
            deadlocks_resolved=rm.deadlocks_resolved,
            new_output_bytes=rm.cum_new_output_bytes,
            makespan_wall_s=wall,
            makespan_modeled_s=wall + delta.modeled_swap_seconds,
            stuck=rm.stuck,
            node_latencies=latencies,
        )
