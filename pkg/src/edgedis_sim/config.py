"""Run configuration and the world factory shared by every scheme."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import majority, partition
from .simnet import CLOUD_DELAY_MS, GIGABIT, FaultPlan, Simulator, build_topology

KB = 1024
MB = 1024 * KB
GB = 1024 * MB

SCHEMES = ("edgedis", "edgedis-rnd", "datasync", "gossip", "raft", "edda")


@dataclass(frozen=True)
class SimConfig:
    scheme: str = "edgedis"
    n: int = 32
    nd: float = 1.4
    r: float = 0.0
    ds: int = 1 * GB
    bs: int = 512 * KB
    dl_lo: float = 5.0
    dl_hi: float = 15.0
    cr: float = 20.0
    t_ms: float = 250.0
    heartbeat_ms: float = 50.0
    dist_timeout_ms: float = 300.0
    trans_timeout_ms: float = 100.0
    entry_fraction: float = 0.25
    seed: int = 1
    bw_range: tuple[float, float] = (1.0, 1.0)
    bandwidth: float = GIGABIT
    cloud_bandwidth: float = GIGABIT
    cloud_delay_ms: float = CLOUD_DELAY_MS
    edda_max_hops: int = 3
    crashes: tuple[tuple[float, str, int], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0, 1]")
        if self.dl_lo > self.dl_hi or self.dl_lo < 0:
            raise ValueError("delay range must satisfy 0 <= dl_lo <= dl_hi")
        if not 0.0 < self.entry_fraction <= 1.0:
            raise ValueError("entry fraction must lie in (0, 1]")
        lo, hi = self.bw_range
        if not 0.0 < lo <= hi:
            raise ValueError("bandwidth range must satisfy 0 < lo <= hi")
        partition(self.ds, self.bs)

    @property
    def block_count(self) -> int:
        return partition(self.ds, self.bs)

    @property
    def majority(self) -> int:
        return majority(self.n)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def make_world(cfg: SimConfig, *, trace: bool = False) -> Simulator:
    topo = build_topology(
        cfg.n,
        cfg.nd,
        cfg.seed,
        delay_range=(cfg.dl_lo, cfg.dl_hi),
        cloud_delay=cfg.cloud_delay_ms,
        bandwidth=cfg.bandwidth,
        cloud_bandwidth=cfg.cloud_bandwidth,
        bw_range=cfg.bw_range,
    )
    world = Simulator(
        topo,
        block_size=cfg.bs,
        block_count=cfg.block_count,
        seed=cfg.seed,
        faults=FaultPlan(cfg.r, list(cfg.crashes)),
        trace=trace,
    )
    world.config = cfg
    return world
