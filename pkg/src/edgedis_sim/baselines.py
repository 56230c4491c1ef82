"""Competing dissemination schemes on the same network substrate."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import networkx as nx

from .edgedis import EdgeDisCloud, install_servers, random_entries, setup_edgedis
from .model import CLOUD, Kind, Message, NodeState, Role
from .simnet import stream


class _Relay:
    """Edge server that stores blocks, acknowledges them, and forwards them on.

    ``targets(block, src)`` decides where a freshly received block goes next;
    lost forwards are retried every ``trans_timeout_ms``.
    """

    def __init__(self, world, node_id: int):
        self.world = world
        self.id = node_id
        self.state = NodeState(node_id, world.block_count, world.topology.bandwidths[node_id])
        self.pending: dict[int, set[int]] = {}
        self._gen: dict[int, int] = {}
        world.actors[node_id] = self

    def targets(self, block: int, src: int) -> list[int]:
        return []

    def deliver(self, msg: Message) -> None:
        if msg.kind == Kind.BLOCK_RECEIPT:
            pending = self.pending.get(msg.block_id)
            if pending is not None:
                pending.discard(msg.src)
            return
        b = msg.block_id
        self.world.send(Message(Kind.BLOCK_RECEIPT, self.id, msg.src, block_id=b))
        st = self.state
        if not st.store(b):
            return
        if st.complete:
            self.world.node_full(self.id)
        targets = self.targets(b, msg.src)
        if targets:
            self.pending[b] = set(targets)
            self._push(b, targets)

    def _push(self, block: int, targets) -> None:
        last = self.world.now
        for v in targets:
            last, _ = self.world.send(Message(Kind.BLOCK_TRANSMISSION, self.id, v, block_id=block))
        gen = self._gen.get(block, 0) + 1
        self._gen[block] = gen
        timeout = self.world.config.trans_timeout_ms
        self.world.set_timer(self.id, last + timeout, "retransmit", (block, gen))

    def on_timer(self, kind: str, data) -> None:
        block, gen = data
        if self._gen.get(block) != gen:
            return
        pending = self.pending.get(block)
        if pending:
            self.world.stats["retransmits"] += len(pending)
            self._push(block, sorted(pending))

    def on_crash(self) -> None:
        pass

    def on_recover(self) -> None:
        for block, pending in sorted(self.pending.items()):
            if pending:
                self._push(block, sorted(pending))

    def describe(self) -> dict:
        return {"held": self.state.held, "pending": {b: sorted(p) for b, p in self.pending.items() if p}}


class _StopAndWaitCloud:
    """Cloud streams that keep one unacknowledged block each.

    Each stream walks its block sequence; ``pick(stream, block, previous)``
    names the server to (re)send to.
    """

    def __init__(self, world, streams: list[list[int]]):
        self.world = world
        self.streams = streams
        self.cursor = [0] * len(streams)
        # stream -> (block, target, generation)
        self.waiting: dict[int, tuple[int, int, int]] = {}
        self._gen = itertools.count(1)
        world.actors[CLOUD] = self

    def pick(self, stream_id: int, block: int, previous: int | None) -> int:
        raise NotImplementedError

    def start(self) -> None:
        for s in range(len(self.streams)):
            self._next(s)

    def _next(self, s: int) -> None:
        seq = self.streams[s]
        if self.cursor[s] >= len(seq):
            self.waiting.pop(s, None)
            return
        block = seq[self.cursor[s]]
        self._send(s, block, self.pick(s, block, None))

    def _send(self, s: int, block: int, target: int) -> None:
        msg = Message(Kind.DATA_BLOCK_DISTRIBUTION, CLOUD, target, block_id=block)
        depart, _ = self.world.send(msg)
        gen = next(self._gen)
        self.waiting[s] = (block, target, gen)
        self.world.set_timer(CLOUD, depart + self.world.config.dist_timeout_ms, "deadline", (s, gen))

    def deliver(self, msg: Message) -> None:
        if msg.kind != Kind.BLOCK_RECEIPT:
            return
        for s, (block, target, _) in list(self.waiting.items()):
            if block == msg.block_id and target == msg.src:
                self.cursor[s] += 1
                self._next(s)

    def on_timer(self, kind: str, data) -> None:
        s, gen = data
        cur = self.waiting.get(s)
        if cur is None or cur[2] != gen:
            return
        block, target, _ = cur
        self.world.stats["retransmits"] += 1
        self._send(s, block, self.pick(s, block, target))

    def on_crash(self) -> None:
        pass

    def on_recover(self) -> None:
        pass

    def describe(self) -> dict:
        return {"cursor": list(self.cursor), "waiting": dict(self.waiting)}


def _random_other(rng, n: int, exclude: int | None) -> int:
    if exclude is None or n == 1:
        return rng.randrange(1, n + 1)
    pick = rng.randrange(1, n)
    return pick if pick < exclude else pick + 1


# ---------------------------------------------------------------------------
# DataSync: the cloud delivers every block to every server itself
# ---------------------------------------------------------------------------


class DataSyncCloud:
    """Per-block barrier across n direct streams sharing the cloud uplink."""

    def __init__(self, world):
        self.world = world
        self.block = 0
        self.pending: set[int] = set()
        self._gen: dict[int, int] = {}
        world.actors[CLOUD] = self

    def start(self) -> None:
        self._advance()

    def _advance(self) -> None:
        world = self.world
        self.block += 1
        if self.block > world.block_count:
            return
        self.pending = set(range(1, world.n + 1))
        for v in range(1, world.n + 1):
            self._send(v)

    def _send(self, v: int) -> None:
        depart, _ = self.world.send(
            Message(Kind.DATA_BLOCK_DISTRIBUTION, CLOUD, v, block_id=self.block)
        )
        gen = self._gen.get(v, 0) + 1
        self._gen[v] = gen
        self.world.set_timer(
            CLOUD, depart + self.world.config.dist_timeout_ms, "deadline", (self.block, v, gen)
        )

    def deliver(self, msg: Message) -> None:
        if msg.kind != Kind.BLOCK_RECEIPT or msg.block_id != self.block:
            return
        self.pending.discard(msg.src)
        if not self.pending:
            self._advance()

    def on_timer(self, kind: str, data) -> None:
        block, v, gen = data
        if block == self.block and v in self.pending and self._gen.get(v) == gen:
            self.world.stats["retransmits"] += 1
            self._send(v)

    def on_crash(self) -> None:
        pass

    def on_recover(self) -> None:
        pass

    def describe(self) -> dict:
        return {"block": self.block, "pending": sorted(self.pending)}


def setup_datasync(world) -> None:
    for v in range(1, world.n + 1):
        _Relay(world, v)
    DataSyncCloud(world).start()


# ---------------------------------------------------------------------------
# Gossip: one random entry per block, flooding over every link once
# ---------------------------------------------------------------------------


class _GossipServer(_Relay):
    def __init__(self, world, node_id: int, claimed: set):
        super().__init__(world, node_id)
        self.claimed = claimed

    def targets(self, block: int, src: int) -> list[int]:
        out = []
        for u in self.world.topology.neighbors(self.id):
            link = (min(u, self.id), max(u, self.id), block)
            if link not in self.claimed:
                self.claimed.add(link)
                out.append(u)
        return out


class _GossipCloud(_StopAndWaitCloud):
    def pick(self, stream_id: int, block: int, previous: int | None) -> int:
        return _random_other(self.world.rng, self.world.n, previous)


def setup_gossip(world) -> None:
    claimed: set = set()
    for v in range(1, world.n + 1):
        _GossipServer(world, v, claimed)
    _GossipCloud(world, [list(range(1, world.block_count + 1))]).start()


# ---------------------------------------------------------------------------
# Raft-style: a single leader does all fan-out
# ---------------------------------------------------------------------------


class _RaftCloud(EdgeDisCloud):
    """Single-entry cloud; after a timeout it follows the elected coordinator."""

    def retarget(self, old: int) -> tuple[int, int | None]:
        leader = old
        best = -1
        for v in range(1, self.world.n + 1):
            server = self.world.actors[v]
            st = server.state
            if self.world.alive(v) and st.role is Role.COORDINATOR and st.term > best:
                leader, best = v, st.term
        self.state.entry_servers = [leader]
        self.state.entry_slot = {leader: None}
        return leader, leader


def setup_raft(world) -> None:
    servers = install_servers(world)
    leader = stream(world.seed, "leader").randrange(1, world.n + 1)
    cloud = _RaftCloud(world, [leader])
    for v in sorted(servers):
        servers[v].start()
    cloud.start()


def setup_edgedis_rnd(world) -> None:
    setup_edgedis(world, entry_picker=random_entries)


# ---------------------------------------------------------------------------
# EDD-A: pipelining down a Steiner tree rooted at the cloud
# ---------------------------------------------------------------------------


@dataclass
class Tree:
    root: int
    edges: frozenset[tuple[int, int]]
    weight: float

    @property
    def nodes(self) -> set[int]:
        out = {self.root}
        for u, v in self.edges:
            out.update((u, v))
        return out

    def children(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        kids: dict[int, list[int]] = {v: [] for v in adj}
        seen = {self.root}
        queue = deque([self.root])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    kids[u].append(v)
                    queue.append(v)
        return kids


def build_steiner_tree(graph: nx.Graph, root, terminals) -> Tree:
    """Metric-closure 2-approximation of the Steiner tree over ``terminals``.

    Shortest-path distances between terminals form a complete graph whose MST
    is expanded back into graph paths; the union's MST is then pruned of
    non-terminal leaves. Edge weights come from the ``weight`` attribute
    (default 1).
    """
    terms = sorted(set(terminals) | {root})
    for t in terms:
        if t not in graph:
            raise ValueError(f"terminal {t!r} not in graph")
    if len(terms) == 1:
        return Tree(root, frozenset(), 0.0)
    dist, paths = {}, {}
    for t in terms:
        d, p = nx.single_source_dijkstra(graph, t, weight="weight")
        dist[t], paths[t] = d, p
    closure = nx.Graph()
    for i, a in enumerate(terms):
        for b in terms[i + 1 :]:
            if b not in dist[a]:
                raise ValueError("terminals are not connected")
            closure.add_edge(a, b, weight=dist[a][b])
    expanded = nx.Graph()
    for a, b in sorted(nx.minimum_spanning_edges(closure, data=False)):
        path = paths[a][b]
        for u, v in zip(path, path[1:]):
            expanded.add_edge(u, v, weight=graph[u][v].get("weight", 1))
    tree = nx.minimum_spanning_tree(expanded)
    keep = set(terms)
    leaves = [v for v in tree if tree.degree(v) == 1 and v not in keep]
    while leaves:
        tree.remove_nodes_from(leaves)
        leaves = [v for v in tree if tree.degree(v) == 1 and v not in keep]
    edges = frozenset((min(u, v), max(u, v)) for u, v in tree.edges())
    weight = sum(graph[u][v].get("weight", 1) for u, v in edges)
    return Tree(root, edges, float(weight))


def cover_entries(topology, max_hops: int) -> list[int]:
    """Greedy set cover: servers whose ``max_hops`` balls reach every server."""
    g = topology.graph()
    balls = {
        v: set(nx.single_source_shortest_path_length(g, v, cutoff=max_hops))
        for v in topology.nodes
    }
    uncovered = set(topology.nodes)
    chosen = []
    while uncovered:
        best = max(topology.nodes, key=lambda v: (len(balls[v] & uncovered), -v))
        chosen.append(best)
        uncovered -= balls[best]
    return sorted(chosen)


def edda_tree(topology, max_hops: int) -> Tree:
    g = topology.graph()
    nx.set_edge_attributes(g, 1, "weight")
    for e in cover_entries(topology, max_hops):
        g.add_edge(CLOUD, e, weight=0)
    return build_steiner_tree(g, CLOUD, list(topology.nodes))


class _TreeServer(_Relay):
    def __init__(self, world, node_id: int, children: list[int]):
        super().__init__(world, node_id)
        self.children = children

    def targets(self, block: int, src: int) -> list[int]:
        return list(self.children)


class _TreeCloud(_StopAndWaitCloud):
    def __init__(self, world, children: list[int]):
        blocks = list(range(1, world.block_count + 1))
        super().__init__(world, [blocks for _ in children])
        self.children = children

    def pick(self, stream_id: int, block: int, previous: int | None) -> int:
        return self.children[stream_id]


def setup_edda(world) -> Tree:
    tree = edda_tree(world.topology, world.config.edda_max_hops)
    kids = tree.children()
    for v in range(1, world.n + 1):
        _TreeServer(world, v, kids.get(v, []))
    _TreeCloud(world, kids[CLOUD]).start()
    return tree
