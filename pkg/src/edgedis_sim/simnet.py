"""Discrete-event network substrate: clock, event queue, topology, links, faults."""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import networkx as nx

from .metrics import CostLedger
from .model import BLOCK_KINDS, CLOUD, KIND_NAMES, Message, wire_bytes

GIGABIT = 125_000_000.0  # bytes per second
DEFAULT_BLOCK = 512 * 1024
CLOUD_RTT_MS = 240.95


def calibrated_cloud_delay(block_size: int = DEFAULT_BLOCK, bandwidth: float = GIGABIT) -> float:
    """One-way cloud delay that makes a block out plus a 12-byte receipt back take 240.95 ms."""
    out = (block_size + 12) * 1000.0 / bandwidth
    back = 12 * 1000.0 / bandwidth
    return (CLOUD_RTT_MS - out - back) / 2.0


CLOUD_DELAY_MS = calibrated_cloud_delay()

# event actions
DELIVER, TIMER, CRASH, RECOVER, CALL = range(5)
_ACTION_NAMES = ("deliver", "timer", "crash", "recover", "call")


def stream(seed: int, name: str) -> random.Random:
    """Independent, reproducible RNG stream for one concern of one run."""
    return random.Random(f"{seed}:{name}")


def sample_delay(lo: float, hi: float, rng: random.Random) -> float:
    if lo > hi:
        raise ValueError("delay range must satisfy lo <= hi")
    if lo == hi:
        return float(lo)
    return rng.uniform(lo, hi)


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


@dataclass
class Topology:
    n: int
    edges: frozenset[tuple[int, int]]
    delay_range: tuple[float, float] = (5.0, 15.0)
    cloud_delay: float = CLOUD_DELAY_MS
    bandwidths: dict[int, float] = field(default_factory=dict)
    adjacency: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        adj: dict[int, list[int]] = {v: [] for v in range(1, self.n + 1)}
        for u, v in sorted(self.edges):
            adj[u].append(v)
            adj[v].append(u)
        self.adjacency = {v: tuple(sorted(ns)) for v, ns in adj.items()}
        for v in range(self.n + 1):
            self.bandwidths.setdefault(v, GIGABIT)

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def is_connected(self) -> bool:
        return self.n <= 1 or nx.is_connected(self.graph())


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def edge_count(n: int, nd: float) -> int:
    m = math.floor(nd * n + 0.5)
    return min(m, n * (n - 1) // 2)


def build_edges(n: int, nd: float, seed: int) -> frozenset[tuple[int, int]]:
    """Near-regular connected graph with round(nd * n) edges.

    A ring is laid first, then whole circulant layers with seeded offsets while
    at least n edges remain, and finally greedy chords between minimum-degree
    nodes so that degrees never differ by more than one.
    """
    if n < 1:
        raise ValueError("topology needs at least one node")
    if n == 1:
        return frozenset()
    m = edge_count(n, nd)
    if m < n - 1:
        raise ValueError(f"density {nd} gives {m} edges, too few to connect {n} nodes")
    if m == n - 1:
        return frozenset(_edge(i, i + 1) for i in range(1, n))

    rng = stream(seed, "topology")
    base = {_edge(i, i % n + 1) for i in range(1, n + 1)}
    offsets = list(range(2, (n - 1) // 2 + 1))
    rng.shuffle(offsets)
    while m - len(base) >= n and offsets:
        o = offsets.pop()
        base |= {_edge(i, (i + o - 1) % n + 1) for i in range(1, n + 1)}

    for _attempt in range(200):
        edges = set(base)
        deg = {v: 0 for v in range(1, n + 1)}
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        ok = True
        while len(edges) < m:
            low = min(deg.values())
            pool = [v for v in deg if deg[v] == low]
            pairs = [
                (u, v)
                for i, u in enumerate(pool)
                for v in pool[i + 1 :]
                if _edge(u, v) not in edges
            ]
            if not pairs:
                # allow one step above the minimum when the low nodes are saturated
                pool2 = [v for v in deg if deg[v] == low + 1]
                if len(pool) != 1:
                    ok = False
                    break
                u = pool[0]
                pairs = [(u, v) for v in pool2 if _edge(u, v) not in edges]
                if not pairs:
                    ok = False
                    break
            u, v = pairs[rng.randrange(len(pairs))]
            edges.add(_edge(u, v))
            deg[u] += 1
            deg[v] += 1
        if ok and max(deg.values()) - min(deg.values()) <= 1:
            return frozenset(edges)
    raise ValueError(f"could not place {m} edges on {n} nodes with near-regular degrees")


def build_topology(
    n: int,
    nd: float,
    seed: int,
    *,
    delay_range: tuple[float, float] = (5.0, 15.0),
    cloud_delay: float = CLOUD_DELAY_MS,
    bandwidth: float = GIGABIT,
    cloud_bandwidth: float = GIGABIT,
    bw_range: tuple[float, float] = (1.0, 1.0),
) -> Topology:
    edges = build_edges(n, nd, seed)
    lo, hi = bw_range
    rng = stream(seed, "bandwidth")
    bws = {CLOUD: cloud_bandwidth}
    for v in range(1, n + 1):
        bws[v] = bandwidth * (lo if lo == hi else rng.uniform(lo, hi))
    return Topology(n, edges, tuple(delay_range), cloud_delay, bws)


# ---------------------------------------------------------------------------
# Faults
# ---------------------------------------------------------------------------


@dataclass
class FaultPlan:
    message_failure_rate: float = 0.0
    scripted: list[tuple[float, str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0.0 <= self.message_failure_rate <= 1.0:
            raise ValueError("message failure rate must lie in [0, 1]")
        for _, what, node in self.scripted:
            if what not in ("crash", "recover"):
                raise ValueError(f"unknown scripted fault {what!r}")
            if node == CLOUD:
                raise ValueError("the cloud server does not crash")


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class Stalled(RuntimeError):
    """The run cannot make progress towards its goal."""

    def __init__(self, reason: str, now: float, snapshot: dict):
        super().__init__(f"{reason} at t={now:.3f} ms")
        self.now = now
        self.snapshot = snapshot


class Actor(Protocol):
    def deliver(self, msg: Message) -> None: ...
    def on_timer(self, kind: str, data: object) -> None: ...
    def on_crash(self) -> None: ...
    def on_recover(self) -> None: ...


class Simulator:
    """Single-run world: clock, queue, links, ledger and node actors."""

    def __init__(
        self,
        topology: Topology,
        *,
        block_size: int,
        block_count: int,
        seed: int,
        faults: FaultPlan | None = None,
        trace: bool = False,
    ):
        self.topology = topology
        self.n = topology.n
        self.block_size = block_size
        self.block_count = block_count
        self.seed = seed
        self.faults = faults or FaultPlan()
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self.actors: dict[int, Actor] = {}
        self.down: set[int] = set()
        self.busy_until = [0.0] * (self.n + 1)
        self.ledger = CostLedger(block_count)
        self.delay_rng = stream(seed, "delay")
        self.fault_rng = stream(seed, "fault")
        self.rng = stream(seed, "protocol")
        self.trace: list[str] | None = [] if trace else None
        self.full_nodes = 0
        self.last_full_at: float | None = None
        self.monitor = None
        # scenario hooks: (src, dst) -> fixed delay, and a drop filter
        self.delay_override: dict[tuple[int, int], float] = {}
        self.block_filter: Callable[[Message], bool] | None = None
        self.events_processed = 0
        self.stats = {"elections": 0, "supplements": 0, "retransmits": 0}
        # (time, node, role name, term) for every role change
        self.role_log: list[tuple[float, int, str, int]] = []
        for at, what, node in self.faults.scripted:
            self.schedule(at, CRASH if what == "crash" else RECOVER, node)

    # -- scheduling --------------------------------------------------------
    def schedule(self, at: float, action: int, a=None, b=None) -> None:
        if at < self.now:
            at = self.now
        heapq.heappush(self._queue, (at, next(self._seq), action, a, b))

    def set_timer(self, node: int, at: float, kind: str, data: object = None) -> None:
        self.schedule(at, TIMER, node, (kind, data))

    def call_at(self, at: float, fn: Callable[["Simulator"], None]) -> None:
        self.schedule(at, CALL, fn)

    def alive(self, node: int) -> bool:
        return node not in self.down

    # -- links -------------------------------------------------------------
    def serialization_ms(self, src: int, nbytes: int) -> float:
        return nbytes * 1000.0 / self.topology.bandwidths[src]

    def one_way_delay(self, src: int, dst: int) -> float:
        fixed = self.delay_override.get((src, dst))
        if fixed is not None:
            return fixed
        if src == CLOUD or dst == CLOUD:
            return self.topology.cloud_delay
        lo, hi = self.topology.delay_range
        return sample_delay(lo, hi, self.delay_rng)

    def transmit(self, msg: Message) -> tuple[float, float | None]:
        """Put ``msg`` on the wire; returns (departure, arrival or None if lost).

        Block-bearing messages queue FIFO on the sender's outbound link and may
        be lost with the configured failure rate. Control messages are small
        and never wait behind bulk transfers.
        """
        src = msg.src
        size = wire_bytes(msg, self.block_size)
        ser = size * 1000.0 / self.topology.bandwidths[src]
        bulk = msg.kind in BLOCK_KINDS
        if bulk:
            start = self.busy_until[src]
            if start < self.now:
                start = self.now
            depart = start + ser
            self.busy_until[src] = depart
        else:
            depart = self.now + ser
        arrival = depart + self.one_way_delay(src, msg.dst)
        r = self.faults.message_failure_rate
        lost = bulk and r > 0.0 and self.fault_rng.random() < r
        if not lost and self.block_filter is not None and self.block_filter(msg):
            lost = True
        self.ledger.record(depart, msg, size, lost)
        if self.trace is not None:
            self._trace_line(self.now, "send", msg, "lost" if lost else f"arr={arrival:.6f}")
        if lost:
            return depart, None
        self.schedule(arrival, DELIVER, msg)
        return depart, arrival

    def send(self, msg: Message) -> tuple[float, float | None]:
        if msg.src != CLOUD and msg.src in self.down:
            raise RuntimeError(f"crashed node {msg.src} attempted to send")
        return self.transmit(msg)

    # -- bookkeeping hooks used by actors ------------------------------------
    def node_full(self, node: int) -> None:
        self.full_nodes += 1
        self.last_full_at = self.now

    @property
    def all_full(self) -> bool:
        return self.full_nodes >= self.n

    # -- trace ---------------------------------------------------------------
    def _trace_line(self, at: float, event: str, msg: Message | None, extra: str = "") -> None:
        if msg is None:
            line = f"{at:.6f}\t{event}\t-\t-\t-\t{extra}"
        else:
            line = (
                f"{at:.6f}\t{event}\t{msg.src}\t{msg.dst}\t"
                f"{KIND_NAMES[msg.kind]}\t{msg.fields()}"
            )
            if extra:
                line += f" {extra}"
        self.trace.append(line)

    def note(self, text: str) -> None:
        if self.trace is not None:
            self._trace_line(self.now, "note", None, text)

    # -- main loop -----------------------------------------------------------
    def snapshot(self) -> dict:
        snap = {"now": self.now, "down": sorted(self.down), "full_nodes": self.full_nodes}
        for nid, actor in sorted(self.actors.items()):
            describe = getattr(actor, "describe", None)
            if describe is not None:
                snap[nid] = describe()
        return snap

    def run(
        self,
        until: Callable[["Simulator"], bool],
        *,
        max_time: float | None = None,
    ) -> float:
        queue = self._queue
        actors = self.actors
        down = self.down
        trace = self.trace
        monitor = self.monitor
        pop = heapq.heappop
        while not until(self):
            if not queue:
                raise Stalled("event queue exhausted", self.now, self.snapshot())
            at, _, action, a, b = pop(queue)
            if max_time is not None and at > max_time:
                heapq.heappush(queue, (at, _, action, a, b))
                raise Stalled("time horizon exceeded", self.now, self.snapshot())
            self.now = at
            self.events_processed += 1
            if action == DELIVER:
                dst = a.dst
                if dst in down:
                    if trace is not None:
                        self._trace_line(at, "discard", a)
                    continue
                if trace is not None:
                    self._trace_line(at, "deliver", a)
                actors[dst].deliver(a)
                touched = dst
            elif action == TIMER:
                if a in down:
                    continue
                if trace is not None:
                    trace.append(f"{at:.6f}\ttimer\t{a}\t{a}\t{b[0]}\t{b[1]}")
                actors[a].on_timer(b[0], b[1])
                touched = a
            elif action == CRASH:
                if a in down:
                    continue
                down.add(a)
                if trace is not None:
                    trace.append(f"{at:.6f}\tcrash\t{a}\t-\t-\t-")
                actors[a].on_crash()
                touched = a
            elif action == RECOVER:
                if a not in down:
                    continue
                down.discard(a)
                if trace is not None:
                    trace.append(f"{at:.6f}\trecover\t{a}\t-\t-\t-")
                actors[a].on_recover()
                touched = a
            else:
                if trace is not None:
                    trace.append(f"{at:.6f}\tcall\t-\t-\t-\t-")
                a(self)
                touched = None
            if monitor is not None:
                monitor.after_event(self, touched)
        return self.now

    def pending_events(self) -> Iterable[tuple]:
        return iter(sorted(self._queue))
