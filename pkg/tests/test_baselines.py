import itertools
import statistics

import networkx as nx
import pytest

from edgedis_sim.baselines import build_steiner_tree, cover_entries, edda_tree
from edgedis_sim.config import KB, SimConfig
from edgedis_sim.metrics import delivered_blocks
from edgedis_sim.model import CLOUD, Kind
from edgedis_sim.runner import run, simulate
from edgedis_sim.simnet import build_topology

SMALL = 4 * 512 * KB


def cost(scheme, **kw):
    kw.setdefault("ds", SMALL)
    res = simulate(SimConfig(scheme=scheme, **kw))
    assert not res.stalled
    return res.cost


@pytest.mark.parametrize("n, cr, expected", [(32, 20, 640.0), (8, 20, 160.0), (32, 5, 160.0)])
def test_datasync_cost(n, cr, expected):
    assert cost("datasync", n=n, cr=cr) == expected


def test_gossip_ring_cost():
    assert cost("gossip", n=32, nd=1.0) == 52.0


def test_gossip_single_server():
    assert cost("gossip", n=1, nd=1.0) == 20.0


def test_gossip_default_density_cost():
    assert 60.0 <= cost("gossip", n=32, nd=1.4) <= 66.0


def test_gossip_forwards_each_block_once_per_node():
    res, world = run(SimConfig(scheme="gossip", n=16, ds=SMALL, seed=2))
    seen = set()
    for e in world.ledger.entries:
        if e.msg.kind == Kind.BLOCK_TRANSMISSION:
            key = (e.msg.src, e.msg.dst, e.msg.block_id)
            assert key not in seen
            seen.add(key)


@pytest.mark.parametrize("n, expected", [(32, 52.0), (8, 28.0)])
def test_raft_cost(n, expected):
    assert abs(cost("raft", n=n) - expected) <= 1.0


def test_raft_matches_single_entry_edgedis():
    cfg = SimConfig(n=16, ds=SMALL, seed=4)
    _, raft = run(cfg.with_(scheme="raft"))
    _, one = run(cfg.with_(scheme="edgedis", entry_fraction=1 / 16))

    def edge_messages(world):
        return sum(
            1 for e in world.ledger.entries
            if not e.backhaul and e.msg.kind in (Kind.BLOCK_TRANSMISSION, Kind.BLOCK_RECEIPT)
        )

    assert edge_messages(raft) == edge_messages(one)


# -- Steiner tree ------------------------------------------------------------

def brute_force_steiner(graph, terminals):
    others = [v for v in graph if v not in terminals]
    best = float("inf")
    for k in range(len(others) + 1):
        for extra in itertools.combinations(others, k):
            sub = graph.subgraph(set(terminals) | set(extra))
            if nx.is_connected(sub):
                mst = nx.minimum_spanning_tree(sub)
                best = min(best, mst.size(weight="weight"))
    return best


def test_star_is_its_own_tree():
    g = nx.star_graph(5)
    nx.set_edge_attributes(g, 1, "weight")
    tree = build_steiner_tree(g, 0, [1, 2, 3, 4, 5])
    assert tree.edges == frozenset((0, v) for v in range(1, 6))
    assert tree.weight == 5


def test_ring_within_twice_optimal():
    g = nx.cycle_graph(4)
    nx.set_edge_attributes(g, 1, "weight")
    tree = build_steiner_tree(g, 0, [1, 3])
    assert tree.weight <= 2 * brute_force_steiner(g, [0, 1, 3])


@pytest.mark.parametrize("seed", range(12))
def test_random_graphs_within_twice_optimal(seed):
    import random

    rng = random.Random(seed)
    g = nx.connected_watts_strogatz_graph(8, 4, 0.4, seed=seed)
    for u, v in g.edges:
        g[u][v]["weight"] = rng.randint(1, 5)
    terminals = rng.sample(range(8), rng.randint(2, 5))
    tree = build_steiner_tree(g, terminals[0], terminals)
    opt = brute_force_steiner(g, terminals)
    assert opt <= tree.weight <= 2 * opt
    t = nx.Graph(list(tree.edges))
    assert nx.is_tree(t) and set(terminals) <= set(t)


def test_root_only_tree():
    g = nx.path_graph(3)
    tree = build_steiner_tree(g, 1, [1])
    assert tree.edges == frozenset() and tree.weight == 0


def test_disconnected_rejected():
    g = nx.Graph([(0, 1), (2, 3)])
    with pytest.raises(ValueError):
        build_steiner_tree(g, 0, [0, 3])


def test_edda_tree_spans_every_server():
    topo = build_topology(32, 1.4, 1)
    tree = edda_tree(topo, 3)
    assert tree.nodes == set(range(33))
    kids = tree.children()
    assert kids[CLOUD] == cover_entries(topo, 3)


@pytest.mark.parametrize("nd", [1.0, 1.4, 2.0])
def test_edda_cost_is_backhaul_children_plus_edges(nd):
    topo = build_topology(32, nd, 1)
    k = len(edda_tree(topo, 3).children()[CLOUD])
    assert cost("edda", n=32, nd=nd) == k * 20 + (32 - k)


def test_edda_ring_value():
    assert cost("edda", n=32, nd=1.0) == 127.0


def test_edda_cost_falls_with_density():
    assert cost("edda", nd=1.0) > cost("edda", nd=2.0)


def test_random_entries_same_speed_when_homogeneous():
    a = [simulate(SimConfig(scheme="edgedis", ds=32 * 512 * KB, seed=s)).time_s for s in range(1, 9)]
    b = [simulate(SimConfig(scheme="edgedis-rnd", ds=32 * 512 * KB, seed=s)).time_s for s in range(1, 9)]
    assert statistics.fmean(b) == pytest.approx(statistics.fmean(a), rel=0.03)


@pytest.mark.parametrize("scheme", ["edgedis", "edgedis-rnd", "datasync", "gossip", "raft", "edda"])
def test_every_scheme_survives_crash_and_recovery(scheme):
    cfg = SimConfig(
        scheme=scheme, n=8, ds=8 * 512 * KB, r=0.01, seed=6,
        crashes=((300.0, "crash", 2), (1500.0, "recover", 2), (700.0, "crash", 5), (900.0, "recover", 5)),
    )
    res, world = run(cfg)
    assert not res.stalled
    assert all(world.actors[v].state.complete for v in range(1, 9))


@pytest.mark.parametrize("scheme", ["edgedis", "datasync", "gossip", "raft", "edda"])
def test_held_blocks_trace_to_deliveries(scheme):
    res, world = run(SimConfig(scheme=scheme, n=8, ds=SMALL, seed=1))
    got = delivered_blocks(world.ledger)
    for v in range(1, 9):
        held = {b for b in range(1, 5) if world.actors[v].state.status[b]}
        assert held == got.get(v, set())
