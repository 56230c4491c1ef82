"""Run one configured simulation and summarize it."""

from __future__ import annotations

from .baselines import setup_datasync, setup_edda, setup_edgedis_rnd, setup_gossip, setup_raft
from .config import SimConfig, make_world
from .edgedis import setup_edgedis
from .metrics import RunResult
from .simnet import Simulator, Stalled

SETUP = {
    "edgedis": setup_edgedis,
    "edgedis-rnd": setup_edgedis_rnd,
    "datasync": setup_datasync,
    "gossip": setup_gossip,
    "raft": setup_raft,
    "edda": setup_edda,
}


def default_horizon_ms(cfg: SimConfig) -> float:
    """Generous simulated-time budget; exceeding it means the run is stuck."""
    crash_end = max((at for at, _, _ in cfg.crashes), default=0.0)
    per_block = 2.0 * cfg.n * cfg.bs * 1000.0 / cfg.bandwidth / max(cfg.bw_range[0], 1e-3)
    return crash_end + 120_000.0 + cfg.block_count * (per_block + 2_000.0)


def build(cfg: SimConfig, *, trace: bool = False, monitor=None) -> Simulator:
    world = make_world(cfg, trace=trace)
    world.monitor = monitor
    SETUP[cfg.scheme](world)
    return world


def finish(world: Simulator, *, horizon_ms: float | None = None) -> RunResult:
    cfg = world.config
    horizon = default_horizon_ms(cfg) if horizon_ms is None else horizon_ms
    stalled = False
    try:
        world.run(lambda w: w.all_full, max_time=horizon)
    except Stalled:
        stalled = True
    ledger = world.ledger
    return RunResult(
        scheme=cfg.scheme,
        time_s=None if stalled else world.last_full_at / 1000.0,
        cost=ledger.cost(cfg.cr),
        control_bytes=ledger.control_bytes,
        heartbeat_bytes=ledger.heartbeat_bytes,
        elections=world.stats["elections"],
        supplements=world.stats["supplements"],
        retransmits=world.stats["retransmits"],
        stalled=stalled,
    )


def run(
    cfg: SimConfig,
    *,
    trace: bool = False,
    monitor=None,
    horizon_ms: float | None = None,
) -> tuple[RunResult, Simulator]:
    world = build(cfg, trace=trace, monitor=monitor)
    return finish(world, horizon_ms=horizon_ms), world


def simulate(cfg: SimConfig, **kwargs) -> RunResult:
    return run(cfg, **kwargs)[0]
