"""Resource Manager: admission control, depth-first priority, dependency
tracking over shared segments, and the eviction policy suite.

Memory accounting: a Running node reserves its declared estimate; everything
else is accounted by what sandboxes actually charge (resident bytes only, so
swapped-out outputs free budget). Admission starts the highest-priority Ready
node whenever reservations + charges + estimate fit under mem_limit scaled by
the overcommit percentage.

Eviction: idle DeCache entries go first, then the outputs of the
lowest-priority Done nodes, one victim at a time with exact re-measurement in
between (rollback cascades through dependency sets make projections
underestimate). Outputs read by a Running node are never victims.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .decache import DeCache, Hit, Ticket
from .errors import BusySegment, DanglingRef, InsufficientEvictables, InvalidDag

WAITING = "waiting"
READY = "ready"
RUNNING = "running"
DONE = "done"
ROLLED_BACK = "rolledback"

POLICY_NONE = "none"
POLICY_KSWAP = "kswap"
POLICY_ROLLBACK = "rollback"
POLICY_LIMITDROP = "limitdrop"
POLICY_ADAPTIVE = "adaptive"
POLICIES = (POLICY_NONE, POLICY_KSWAP, POLICY_ROLLBACK, POLICY_LIMITDROP, POLICY_ADAPTIVE)

TRIGGER_DEADLOCK = "deadlock"
TRIGGER_ACTIVE = "active"

DELETE = "delete"
SWAP = "swap"


@dataclass
class PolicyConfig:
    policy: str = POLICY_NONE
    trigger: str = TRIGGER_DEADLOCK
    overcommit_pct: int = 100
    adaptive_theta_scale: float = 1.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.trigger not in (TRIGGER_DEADLOCK, TRIGGER_ACTIVE):
            raise ValueError(f"unknown trigger {self.trigger!r}")
        if self.overcommit_pct < 100:
            raise ValueError("overcommit_pct must be >= 100")


@dataclass
class NodeSpec:
    id: str
    code: tuple  # ("loader", path, LoadOptions) | ("compute", op dict)
    mem_estimate: int
    depth: int = 0  # distance from the DAG root; filled at submit

    def __post_init__(self):
        if self.mem_estimate <= 0:
            raise InvalidDag(f"node {self.id}: mem_estimate must be positive")

    @property
    def is_loader(self) -> bool:
        return self.code[0] == "loader"


@dataclass
class DagSpec:
    id: str
    nodes: list[NodeSpec]
    edges: dict[str, list[str]] = field(default_factory=dict)  # child -> parents


@dataclass
class Node:
    """Runtime node state."""

    spec: NodeSpec
    dag: "Dag"
    status: str = WAITING
    depth: int = 0
    parents: list["Node"] = field(default_factory=list)
    children: list["Node"] = field(default_factory=list)
    output: object = None  # engine OutputHandle
    output_claims: int = 0  # children that still need this output
    measured_latency: float = 0.0
    output_bytes: int = 0
    account_id: Optional[int] = None
    run_count: int = 0
    cache_entry: object = None  # DeCache entry backing this loader
    ticket: Optional[Ticket] = None
    waiting_on_cache: object = None  # entry this loader blocks on

    @property
    def key(self) -> str:
        return f"{self.dag.spec.id}:{self.spec.id}"


@dataclass
class Dag:
    spec: DagSpec
    seq: int
    nodes: dict[str, Node] = field(default_factory=dict)
    complete: bool = False

    def all_done(self) -> bool:
        return all(n.status == DONE for n in self.nodes.values())


@dataclass
class Action:
    kind: str  # start | overcommit | evict | uncache
    node: Optional[str] = None
    mode: Optional[str] = None
    bytes_freed: int = 0


class ResourceManager:
    def __init__(
        self,
        store,
        policy: PolicyConfig,
        mem_limit: int,
        decache: Optional[DeCache] = None,
        trace: Optional[Callable[[dict], None]] = None,
    ):
        self.store = store
        self.policy = policy
        self.mem_limit = mem_limit
        self.decache = decache
        self.trace = trace or (lambda event: None)
        self.dags: list[Dag] = []
        self.seg_deps: dict[int, set] = {}  # segment -> keys of outputs using it
        self.cache_segments: set[int] = set()
        self.stuck = False
        self.loads_executed = 0
        self.nodes_rerun = 0
        self.deadlocks_resolved = 0
        self.cum_new_output_bytes = 0
        # accounts that still own shared segments after their node went away
        self.orphan_accounts: set[int] = set()
        # engine wires these to its eviction mechanisms
        self.rollback_cb: Callable[[Node], int] = None
        self.limit_drop_cb: Callable[[Node], int] = None
        self._deferred_deletes: set[int] = set()

    # -------------------------------------------------------------- submit

    def submit(self, dag_spec: DagSpec):
        self._validate(dag_spec)
        dag = Dag(dag_spec, seq=len(self.dags))
        for ns in dag_spec.nodes:
            dag.nodes[ns.id] = Node(ns, dag)
        for node in dag.nodes.values():
            for pid in dag_spec.edges.get(node.spec.id, []):
                parent = dag.nodes[pid]
                node.parents.append(parent)
                parent.children.append(node)
        self._assign_depths(dag)
        self.dags.append(dag)
        for node in dag.nodes.values():
            if not node.parents:
                node.status = READY
        # loaders consult the cache immediately: hits complete without running
        if self.decache is not None:
            for node in list(dag.nodes.values()):
                if node.spec.is_loader and node.status == READY:
                    self._try_cache_attach(node)
        self.trace({"event": "submit", "dag": dag_spec.id})

    def _validate(self, dag_spec: DagSpec):
        ids = [n.id for n in dag_spec.nodes]
        if len(set(ids)) != len(ids):
            raise InvalidDag(f"dag {dag_spec.id}: duplicate node ids")
        known = set(ids)
        for child, parents in dag_spec.edges.items():
            if child not in known or any(p not in known for p in parents):
                raise InvalidDag(f"dag {dag_spec.id}: edge references unknown node")
        for n in dag_spec.nodes:
            if not n.is_loader and not dag_spec.edges.get(n.id):
                raise InvalidDag(f"dag {dag_spec.id}: non-loader {n.id} has no parents")
        color: dict[str, int] = {}

        def visit(nid: str):
            color[nid] = 1
            for pid in dag_spec.edges.get(nid, []):
                c = color.get(pid, 0)
                if c == 1:
                    raise InvalidDag(f"dag {dag_spec.id}: cycle through {pid}")
                if c == 0:
                    visit(pid)
            color[nid] = 2

        for nid in ids:
            if color.get(nid, 0) == 0:
                visit(nid)

    def _assign_depths(self, dag: Dag):
        def depth_of(node: Node) -> int:
            if node.depth == 0 and node.parents:
                node.depth = 1 + max(depth_of(p) for p in node.parents)
            return node.depth

        for node in dag.nodes.values():
            node.spec.depth = depth_of(node)

    # ------------------------------------------------------------ priority

    def node_priority(self, node: Node) -> tuple:
        """Strict total order; smaller schedules sooner: deeper nodes first
        (closest to finishing a DAG), then earlier-submitted DAGs, then id."""
        return (-node.depth, node.dag.seq, node.spec.id)

    # ----------------------------------------------------------- admission

    def reserved_bytes(self) -> int:
        running = 0
        charges = 0
        for dag in self.dags:
            if dag.complete:
                continue
            for n in dag.nodes.values():
                if n.status == RUNNING:
                    running += n.spec.mem_estimate
                elif n.account_id is not None:
                    charges += self.store.mem_charged(n.account_id)
        if self.decache is not None:
            for entry in self.decache.ready_entries():
                if entry.owner_account is not None:
                    charges += self.store.mem_charged(entry.owner_account)
        for acct in self.orphan_accounts:
            charges += self.store.mem_charged(acct)
        return running + charges

    def available_memory(self) -> int:
        return self.mem_limit - self.reserved_bytes()

    def _budget(self) -> int:
        return self.mem_limit * self.policy.overcommit_pct // 100

    # ---------------------------------------------------------------- tick

    def pump_cache_waiters(self) -> bool:
        """Resolve loaders blocked on another DAG's in-flight load."""
        progressed = False
        for dag in self.dags:
            if dag.complete:
                continue
            for node in dag.nodes.values():
                entry = node.waiting_on_cache
                if entry is None:
                    continue
                if entry.state == "ready":
                    node.waiting_on_cache = None
                    self._complete_from_cache(node, entry)
                    progressed = True
                elif entry.state == "evicted":
                    node.waiting_on_cache = None  # will reload itself
                    progressed = True
        return progressed

    def tick(self) -> list[Action]:
        actions: list[Action] = []
        overcommitted = False
        while True:
            ready = [
                n
                for dag in self.dags
                if not dag.complete
                for n in dag.nodes.values()
                if n.status == READY and n.waiting_on_cache is None
            ]
            if not ready:
                break
            top = min(ready, key=self.node_priority)
            if self.decache is not None and top.spec.is_loader and self._try_cache_attach(top):
                continue
            est = top.spec.mem_estimate
            if self.reserved_bytes() + est <= self._budget():
                self._start(top, actions, overcommit=False)
                continue
            anything_running = self._anything_running()
            if self.policy.policy == POLICY_NONE:
                if not anything_running:
                    self._mark_stuck("admission deadlock, policy none")
                break
            if self.policy.trigger == TRIGGER_DEADLOCK and anything_running:
                break  # not a deadlock yet; wait for completions
            is_deadlock = not anything_running
            if self.policy.policy == POLICY_KSWAP:
                if overcommitted:
                    break  # one overcommitted function at a time
                if is_deadlock:
                    self.deadlocks_resolved += 1
                self._start(top, actions, overcommit=True)
                overcommitted = True
                continue
            needed = self.reserved_bytes() + est - self._budget()
            try:
                evictions = self.free_memory(needed, self.policy.policy)
            except InsufficientEvictables:
                if not anything_running:
                    self._mark_stuck("deadlock and nothing evictable")
                break
            actions.extend(evictions)
            if is_deadlock and evictions:
                self.deadlocks_resolved += 1
        return actions

    def _anything_running(self) -> bool:
        return any(
            n.status == RUNNING
            for dag in self.dags
            if not dag.complete
            for n in dag.nodes.values()
        )

    def _mark_stuck(self, why: str):
        if not self.stuck:
            self.stuck = True
            self.trace({"event": "stuck", "why": why})

    def _start(self, node: Node, actions: list[Action], overcommit: bool):
        if self.decache is not None and node.spec.is_loader:
            got = self.decache.get_or_begin(self._cache_key(node))
            if isinstance(got, Hit):
                # raced to Ready since the peek; cancel the hit refcount,
                # claims pin the entry below
                self.decache.pin(got.entry, -1)
                self._complete_from_cache(node, got.entry)
                return
            node.ticket = got
        if node.run_count > 0:
            self.nodes_rerun += 1
        node.status = RUNNING
        node.run_count += 1
        kind = "overcommit" if overcommit else "start"
        actions.append(Action(kind, node.key))
        self.trace({"event": kind, "node": node.key, "estimate": node.spec.mem_estimate})

    def _cache_key(self, node: Node):
        from .decache import CacheKey

        _, path, opts = node.spec.code
        return CacheKey.of(path, opts.dict_columns)

    def _try_cache_attach(self, node: Node) -> bool:
        entry = self.decache.peek(self._cache_key(node))
        if entry is None:
            return False
        if entry.state == "ready":
            self._complete_from_cache(node, entry)
        else:
            node.waiting_on_cache = entry
        return True

    def _complete_from_cache(self, node: Node, entry):
        """Cache hit: the loader is not run; children are redirected to the
        cached output."""
        node.cache_entry = entry
        node.output = entry.output
        node.output_bytes = entry.physical_bytes
        node.measured_latency = 0.0
        claims = sum(1 for c in node.children if c.status != DONE)
        node.output_claims = claims
        if claims:
            self.decache.pin(entry, claims)
        self._finish_node(node)
        self.trace({"event": "cache_hit", "node": node.key})

    # ---------------------------------------------------------- completion

    def on_load_executed(self):
        self.loads_executed += 1

    def on_node_complete(self, node: Node, output, latency: float):
        """Record measurements, update dependency sets from the sharing
        report, release claims on parents, GC newly-unreferenced segments,
        then sweep the DAG if this completed it."""
        report = output.report
        node.output = output
        node.measured_latency = latency
        node.output_bytes = report.new_output_bytes()
        node.account_id = output.account_id
        self.cum_new_output_bytes += report.new_output_bytes()
        if node.ticket is not None:
            entry = self.decache.finish(
                node.ticket,
                output,
                report,
                report.physical_bytes(),
                owner_account=output.account_id,
            )
            node.ticket = None
            node.cache_entry = entry
            node.account_id = None  # the cache owns the sandbox now
            for seg in report.new_segments:
                self.cache_segments.add(seg)
        for seg in report.segments():
            self.seg_deps.setdefault(seg, set()).add(node.key)
        node.output_claims = sum(1 for c in node.children if c.status != DONE)
        if node.cache_entry is not None and node.output_claims:
            self.decache.pin(node.cache_entry, node.output_claims)
        self._finish_node(node)
        self.trace(
            {
                "event": "complete",
                "node": node.key,
                "latency": round(latency, 6),
                "new_bytes": report.new_output_bytes(),
            }
        )

    def _finish_node(self, node: Node):
        node.status = DONE
        for parent in node.parents:
            self._release_claim(parent)
        for child in node.children:
            if child.status in (WAITING, ROLLED_BACK) and all(
                p.status == DONE for p in child.parents
            ):
                child.status = READY
        if node.dag.all_done():
            self._complete_dag(node.dag)
        self._flush_deferred_deletes()
        self._flush_orphans()

    def _release_claim(self, parent: Node):
        parent.output_claims -= 1
        if parent.cache_entry is not None:
            self.decache.pin(parent.cache_entry, -1)
        elif parent.output_claims <= 0 and parent.status == DONE and parent.children:
            # no more unrun children will use data referencing these columns
            self._retire_output(parent)

    def _retire_output(self, node: Node):
        output = node.output
        if output is None or getattr(output, "released", False):
            return
        output.released = True
        for seg in output.report.segments():
            deps = self.seg_deps.get(seg)
            if deps is None:
                continue
            deps.discard(node.key)
            if not deps and seg not in self.cache_segments:
                self._delete_segment(seg)

    def _delete_segment(self, seg: int):
        try:
            self.store.delete_segment(seg)
            self.seg_deps.pop(seg, None)
        except BusySegment:
            self._deferred_deletes.add(seg)  # a reader raced us; retry later
        except DanglingRef:
            self.seg_deps.pop(seg, None)

    def _flush_deferred_deletes(self):
        for seg in list(self._deferred_deletes):
            deps = self.seg_deps.get(seg)
            if deps:
                self._deferred_deletes.discard(seg)
                continue
            try:
                self.store.delete_segment(seg)
                self._deferred_deletes.discard(seg)
                self.seg_deps.pop(seg, None)
            except BusySegment:
                pass
            except DanglingRef:
                self._deferred_deletes.discard(seg)
                self.seg_deps.pop(seg, None)

    def _flush_orphans(self):
        for acct in list(self.orphan_accounts):
            if (
                self.store.mem_charged(acct) == 0
                and self.store.swap_charged(acct) == 0
            ):
                self.orphan_accounts.discard(acct)
                self.store.remove_account(acct)

    def release_sandbox(self, node: Node):
        """Drop a node's account once its segments are gone; park it as an
        orphan while shared segments keep it charged."""
        acct = node.account_id
        node.account_id = None
        if acct is None:
            return
        self.store.free_account_regions(acct)
        if self.store.mem_charged(acct) == 0 and self.store.swap_charged(acct) == 0:
            self.store.remove_account(acct)
        else:
            self.orphan_accounts.add(acct)

    def _complete_dag(self, dag: Dag):
        """Free every remaining sandbox and segment of the DAG; cached loader
        sandboxes and outputs are preserved by the cache."""
        dag.complete = True
        for node in dag.nodes.values():
            if node.cache_entry is not None:
                continue
            self._retire_output(node)
            if node.account_id is not None:
                for seg in self.store.segments_owned_by(node.account_id):
                    self.seg_deps.pop(seg, None)
                    self._delete_segment(seg)
                self.release_sandbox(node)
        self.trace({"event": "dag_complete", "dag": dag.spec.id})

    # ------------------------------------------------------------ eviction

    def free_memory(self, bytes_needed: int, policy: str) -> list[Action]:
        """First uncache idle DeCache entries, then evict lowest-priority Done
        outputs one at a time until the target is met."""
        if bytes_needed <= 0:
            return []
        actions: list[Action] = []
        target = self.available_memory() + bytes_needed  # absolute goal
        if self.decache is not None:
            freed = self.decache.evict_idle(bytes_needed)
            if freed:
                actions.append(Action("uncache", bytes_freed=freed))
                self.trace({"event": "uncache", "bytes": freed})
        while self.available_memory() < target:
            victim = self._pick_victim(policy)
            if victim is None:
                raise InsufficientEvictables(
                    f"need {target - self.available_memory()} more bytes"
                )
            mode = (
                DELETE
                if policy == POLICY_ROLLBACK
                else SWAP
                if policy == POLICY_LIMITDROP
                else self.adaptive_decide(victim)
            )
            freed = self.rollback_cb(victim) if mode == DELETE else self.limit_drop_cb(victim)
            actions.append(Action("evict", victim.key, mode, freed))
            self.trace(
                {"event": "evict", "node": victim.key, "mode": mode, "bytes": freed}
            )
        return actions

    def _pick_victim(self, policy: str) -> Optional[Node]:
        candidates = []
        for dag in self.dags:
            if dag.complete:
                continue
            for n in dag.nodes.values():
                if n.status != DONE:
                    continue
                if n.cache_entry is not None:
                    continue  # cache-owned outputs are evicted by uncache
                if any(c.status == RUNNING for c in n.children):
                    continue  # never touch outputs a running node reads
                live_output = n.output is not None and not getattr(
                    n.output, "released", False
                )
                resident = (
                    self.store.mem_charged(n.account_id)
                    if n.account_id is not None
                    else 0
                )
                if policy == POLICY_ROLLBACK:
                    eligible = live_output
                elif policy == POLICY_LIMITDROP:
                    eligible = resident > 0
                else:
                    eligible = live_output or resident > 0
                if eligible:
                    candidates.append(n)
        if not candidates:
            return None
        return max(candidates, key=self.node_priority)  # lowest priority first

    def adaptive_decide(self, victim: Node) -> str:
        """Delete when regenerating is cheaper than the modeled swap round
        trip of the output, scaled by theta; ties swap. Zero-size outputs
        delete (swapping them frees nothing)."""
        if victim.output_bytes <= 0:
            return DELETE
        if victim.measured_latency is None:
            return SWAP
        roundtrip = victim.output_bytes * (
            1.0 / self.store.cfg.swap_write_bw + 1.0 / self.store.cfg.swap_read_bw
        )
        threshold = self.policy.adaptive_theta_scale * roundtrip
        return DELETE if victim.measured_latency < threshold else SWAP

    # ------------------------------------------------------------ rollback

    def rollback_bookkeeping(self, node: Node):
        """State changes for a rollback: retire the output, demote the node,
        un-ready children, re-claim parents (transitively re-enabling
        ancestors whose outputs are gone)."""
        self._retire_output(node)
        node.output = None
        node.status = ROLLED_BACK
        for child in node.children:
            if child.status == READY:
                child.status = WAITING
        for parent in node.parents:
            self._reclaim_parent(parent)
        self._requeue(node)

    def _requeue(self, node: Node):
        """A demoted node becomes schedulable once its parents are all Done
        (immediately, for loaders); otherwise parent completion re-readies it."""
        if not node.parents or all(p.status == DONE for p in node.parents):
            node.status = READY

    def _reclaim_parent(self, parent: Node):
        if parent.cache_entry is not None:
            entry = parent.cache_entry
            if entry.state == "ready":
                parent.output_claims += 1
                self.decache.pin(entry, 1)
            else:  # entry evicted meanwhile: the loader must reload
                parent.cache_entry = None
                parent.output = None
                parent.output_claims = 0
                if parent.status == DONE:
                    parent.status = READY
            return
        live = parent.output is not None and not getattr(parent.output, "released", False)
        if live:
            parent.output_claims += 1
            return
        if parent.status == DONE:
            # output already collected; the ancestor must re-run first
            parent.status = ROLLED_BACK
            parent.output = None
            for grand in parent.parents:
                self._reclaim_parent(grand)
            self._requeue(parent)
        # ROLLED_BACK / RUNNING / READY ancestors will produce a fresh output

    # ------------------------------------------------------------- queries

    def all_done(self) -> bool:
        return bool(self.dags) and all(dag.complete for dag in self.dags)

    def has_cache_waiters(self) -> bool:
        return any(
            n.waiting_on_cache is not None
            for dag in self.dags
            if not dag.complete
            for n in dag.nodes.values()
        )
