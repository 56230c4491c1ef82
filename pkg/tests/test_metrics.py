import pytest

from edgedis_sim.config import KB, SimConfig
from edgedis_sim.metrics import CostLedger, completion_time, cost_of, overhead_of
from edgedis_sim.model import Kind, Message
from edgedis_sim.runner import run


def test_empty_ledger():
    ledger = CostLedger(4)
    assert cost_of(ledger, 20) == 0 and overhead_of(ledger) == (0, 0)


def test_cost_and_overhead_by_hand():
    ledger = CostLedger(4)
    ledger.record(0, Message(Kind.DATA_BLOCK_DISTRIBUTION, 0, 1, block_id=1), 100, False)
    ledger.record(0, Message(Kind.BLOCK_TRANSMISSION, 1, 2, block_id=1), 100, True)
    ledger.record(0, Message(Kind.BLOCK_SUPPLEMENT, 1, 3, block_ids=(1, 2)), 200, False)
    ledger.record(0, Message(Kind.HEARTBEAT, 1, 2), 12, False)
    ledger.record(0, Message(Kind.HEARTBEAT_RECEIPT, 2, 1, miss_block_ids=(4,)), 16, False)
    ledger.record(0, Message(Kind.VOTE_REQUEST, 1, 2), 12, False)
    # (20 * 1 + 1 + 2) / 4, lost payload charged
    assert cost_of(ledger, 20) == pytest.approx(23 / 4)
    assert ledger.cost(20) == pytest.approx(23 / 4)
    assert overhead_of(ledger) == (12 * 3 + 12, 28)
    assert (ledger.control_bytes, ledger.heartbeat_bytes) == overhead_of(ledger)


@pytest.mark.parametrize("scheme, expected", [("datasync", 640.0), ("edgedis", 51.0)])
def test_counter_cost_matches_recomputed(scheme, expected):
    res, world = run(SimConfig(scheme=scheme, ds=8 * 512 * KB, r=0.0))
    assert res.cost == cost_of(world.ledger, 20) == expected


def test_edgedis_n16_cost():
    res, _ = run(SimConfig(n=16, ds=8 * 512 * KB))
    assert abs(res.cost - 36.0) <= 1.0


def test_cost_is_sum_of_block_costs():
    res, world = run(SimConfig(n=8, ds=6 * 512 * KB, r=0.01, seed=3))
    per_block = {}
    for e in world.ledger.entries:
        m = e.msg
        for b in (m.block_ids or ((m.block_id,) if m.blocks_carried else ())):
            per_block[b] = per_block.get(b, 0.0) + (20 if e.backhaul else 1)
    assert sum(per_block.values()) / 6 == pytest.approx(res.cost)


def test_single_server_single_block_time():
    res, world = run(SimConfig(n=1, ds=512 * KB))
    # serialization of 512 KB + 12 B at 1 Gbps, then the calibrated cloud delay
    assert completion_time(world) == pytest.approx((4.1944 + 118.377752) / 1000)
    assert res.cost == 20.0


def test_completion_time_requires_completion():
    from edgedis_sim.config import make_world

    with pytest.raises(ValueError):
        completion_time(make_world(SimConfig(n=2, ds=512 * KB)))


def test_no_coordinator_means_no_heartbeat_bytes():
    cfg = SimConfig(n=4, ds=4 * 512 * KB, t_ms=1e9)
    res, _ = run(cfg)
    assert res.heartbeat_bytes == 0 and res.elections == 0


def test_overhead_order_of_magnitude_at_eight():
    res, _ = run(SimConfig(n=8, ds=64 * 1024 * KB))
    total = res.control_bytes + res.heartbeat_bytes
    assert 10_000 <= total <= 1_000_000
