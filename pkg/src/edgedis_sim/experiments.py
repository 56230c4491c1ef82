"""Sweeps, CSV output, the coordinator-uniqueness replay and election timing."""

from __future__ import annotations

import csv
import io
import itertools
import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .config import KB, SimConfig, make_world
from .edgedis import EdgeServer, install_servers
from .metrics import RunResult
from .model import Role
from .monitor import SafetyMonitor
from .runner import run
from .simnet import CRASH, RECOVER, Simulator

CSV_COLUMNS = (
    "scheme",
    "n",
    "nd",
    "r",
    "ds_bytes",
    "bs_bytes",
    "dl_lo",
    "dl_hi",
    "cr",
    "seed",
    "time_s",
    "cost_units",
    "control_bytes",
    "heartbeat_bytes",
    "elections",
    "supplements",
    "retransmits",
    "stalled",
)
_NUMERIC = CSV_COLUMNS[10:]

# CLI-facing parameter names and the config fields they set
SWEEPABLE = {
    "scheme": ("scheme", str),
    "n": ("n", int),
    "nd": ("nd", float),
    "r": ("r", float),
    "ds": ("ds", int),
    "bs": ("bs", int),
    "dl-lo": ("dl_lo", float),
    "dl-hi": ("dl_hi", float),
    "cr": ("cr", float),
    "t": ("t_ms", float),
    "heartbeat-ms": ("heartbeat_ms", float),
    "dist-timeout-ms": ("dist_timeout_ms", float),
    "trans-timeout-ms": ("trans_timeout_ms", float),
    "entry-fraction": ("entry_fraction", float),
}


@dataclass
class SweepSpec:
    base: SimConfig = field(default_factory=SimConfig)
    sweeps: list[tuple[str, list]] = field(default_factory=list)
    runs: int = 1

    def points(self) -> list[SimConfig]:
        if not self.sweeps:
            return [self.base]
        names = [name for name, _ in self.sweeps]
        out = []
        for combo in itertools.product(*(vals for _, vals in self.sweeps)):
            changes = {SWEEPABLE[k][0]: v for k, v in zip(names, combo)}
            out.append(replace(self.base, **changes))
        return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def result_row(cfg: SimConfig, res: RunResult) -> dict:
    return {
        "scheme": cfg.scheme,
        "n": cfg.n,
        "nd": cfg.nd,
        "r": cfg.r,
        "ds_bytes": cfg.ds,
        "bs_bytes": cfg.bs,
        "dl_lo": cfg.dl_lo,
        "dl_hi": cfg.dl_hi,
        "cr": cfg.cr,
        "seed": cfg.seed,
        "time_s": res.time_s,
        "cost_units": res.cost,
        "control_bytes": res.control_bytes,
        "heartbeat_bytes": res.heartbeat_bytes,
        "elections": res.elections,
        "supplements": res.supplements,
        "retransmits": res.retransmits,
        "stalled": res.stalled,
    }


def aggregate_row(rows: Sequence[dict]) -> dict:
    """Arithmetic mean of the numeric columns; seed is marked ``mean``."""
    agg = {k: rows[0][k] for k in CSV_COLUMNS[:10]}
    agg["seed"] = "mean"
    for k in _NUMERIC:
        vals = [row[k] for row in rows]
        if any(v is None for v in vals):
            agg[k] = None
        else:
            agg[k] = statistics.fmean(float(v) for v in vals)
    return agg


def run_sweep(spec: SweepSpec, *, trace_out: list[str] | None = None) -> list[dict]:
    """One row per (point, seed); with several runs each point also gets a mean row."""
    rows: list[dict] = []
    for point in spec.points():
        members = []
        for i in range(spec.runs):
            cfg = replace(point, seed=point.seed + i)
            res, world = run(cfg, trace=trace_out is not None)
            if trace_out is not None:
                trace_out.append(
                    f"# run scheme={cfg.scheme} n={cfg.n} nd={cfg.nd} r={cfg.r} "
                    f"cr={cfg.cr} blocks={cfg.block_count} seed={cfg.seed}"
                )
                trace_out.extend(world.trace)
            members.append(result_row(cfg, res))
        rows.extend(members)
        if spec.runs > 1:
            rows.append(aggregate_row(members))
    return rows


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in CSV_COLUMNS])
    return buf.getvalue()


def cost_from_trace(lines: Iterable[str], cr: float, block_count: int) -> float:
    """Dissemination cost recomputed from ``send`` trace lines of one run."""
    names = {
        "DataBlockDistribution": 1,
        "BlockTransmission": 1,
        "BlockSupplement": None,
        "BlockResponse": None,
    }
    total = 0.0
    for line in lines:
        parts = line.split("\t")
        if len(parts) < 6 or parts[1] != "send" or parts[4] not in names:
            continue
        blocks = names[parts[4]]
        if blocks is None:
            payload = parts[5].split(" ")[0]
            blocks = len(payload[len("blocks=") :].split(",")) if payload.startswith("blocks=") else 0
        backhaul = parts[2] == "0" or parts[3] == "0"
        total += (cr if backhaul else 1.0) * blocks
    return total / block_count


# ---------------------------------------------------------------------------
# Randomized safety and liveness cases
# ---------------------------------------------------------------------------


@dataclass
class SafetyOutcome:
    case: int
    cfg: SimConfig
    result: RunResult
    violations: list[str]


def random_case(case: int, *, max_crashes: int = 3) -> SimConfig:
    rng = random.Random(f"safety:{case}")
    n = rng.randint(4, 16)
    blocks = rng.randint(2, 16)
    nd = round(rng.uniform(1.0, min(2.5, (n - 1) / 2)), 2)
    r = rng.choice((0.0, 0.0, 0.002, 0.005, 0.01))
    # aim crashes at the dissemination window; entries are servers 1..k
    entries = -(-n // 4)
    span = 300.0 * (-(-blocks // entries) + 1)
    crashes = []
    for _ in range(rng.randint(0, max_crashes)):
        node = rng.randint(1, entries) if rng.random() < 0.5 else rng.randint(1, n)
        at = round(rng.uniform(0.0, span), 3)
        back = round(at + rng.uniform(50.0, 1500.0), 3)
        crashes += [(at, "crash", node), (back, "recover", node)]
    return SimConfig(
        scheme="edgedis",
        n=n,
        nd=nd,
        r=r,
        ds=blocks * 512 * KB,
        seed=case,
        crashes=tuple(sorted(crashes)),
    )


def run_safety_case(cfg: SimConfig, case: int = 0) -> SafetyOutcome:
    monitor = SafetyMonitor()
    res, world = run(cfg, monitor=monitor)
    crashed = {node for _, _, node in cfg.crashes}
    entries = set(world.actors[0].state.entry_servers)
    monitor.finish(
        world,
        expect_single_exit=cfg.r == 0.0 and not (crashed & entries),
        expect_no_supplements=cfg.r == 0.0 and not crashed,
    )
    if res.stalled:
        monitor.violations.append("run stalled before every server held every block")
    return SafetyOutcome(case, cfg, res, monitor.violations)


# ---------------------------------------------------------------------------
# Coordinator uniqueness replay
# ---------------------------------------------------------------------------


@dataclass
class ScenarioCheck:
    event: str
    what: str
    ok: bool


@dataclass
class ScenarioVerdict:
    checks: list[ScenarioCheck]
    coordinator_terms: list[int]
    role_log: list[tuple[float, int, str, int]]
    trace: list[str]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[ScenarioCheck]:
        return [c for c in self.checks if not c.ok]


def _live_coordinators(world: Simulator) -> list[tuple[int, int]]:
    return [
        (v, world.actors[v].state.term)
        for v in range(1, world.n + 1)
        if world.alive(v) and world.actors[v].state.role is Role.COORDINATOR
    ]


def run_uniqueness_scenario() -> ScenarioVerdict:
    """Replay three coordinator failures on seven servers with scripted timing.

    Servers 1 and 2 are the contending candidates; 3-6 only vote; 7 starts as
    coordinator in term 4. All links take 10 ms unless a step overrides them.
    """
    cfg = SimConfig(n=7, nd=2.0, ds=512 * KB, dl_lo=10.0, dl_hi=10.0, seed=15)
    world = make_world(cfg, trace=True)
    servers: dict[int, EdgeServer] = install_servers(world)
    for v, s in servers.items():
        s.state.term = 4
        s.state.supported_id = 7
        s.state.coordinator_id = 7
        s.fixed_timeout = 10_000.0
    servers[1].fixed_timeout = 250.0
    servers[2].fixed_timeout = 252.0
    for v in sorted(servers):
        servers[v].start()
    servers[7]._become_coordinator()

    snaps: dict[str, dict] = {}

    def snap(label: str):
        def take(w: Simulator) -> None:
            snaps[label] = {
                "coordinators": _live_coordinators(w),
                "roles": {v: (s.state.role, s.state.term) for v, s in servers.items() if w.alive(v)},
            }

        return take

    def set_timeout(node: int, ms: float):
        def apply(w: Simulator) -> None:
            servers[node].fixed_timeout = ms

        return apply

    def skew(w: Simulator) -> None:
        fast, slow = 5.0, 20.0
        for v in (3, 4):
            w.delay_override[(2, v)] = fast
            w.delay_override[(1, v)] = slow
        for v in (5, 6):
            w.delay_override[(1, v)] = fast
            w.delay_override[(2, v)] = slow

    def unskew(w: Simulator) -> None:
        w.delay_override.clear()

    def partition(w: Simulator) -> None:
        w.block_filter = lambda m: {m.src, m.dst} == {1, 2}

    def heal(w: Simulator) -> None:
        w.block_filter = None

    # Event A
    world.schedule(1001.0, CRASH, 7)
    world.call_at(1900.0, snap("A"))
    # Event B
    world.call_at(1500.0, set_timeout(2, 310.0))
    world.schedule(2001.0, CRASH, 1)
    world.call_at(2050.0, set_timeout(1, 205.0))
    world.schedule(2100.0, RECOVER, 1)
    world.call_at(2200.0, set_timeout(1, 300.0))
    world.call_at(2200.0, set_timeout(2, 260.0))
    world.call_at(2200.0, skew)
    world.call_at(2400.0, unskew)
    world.call_at(2900.0, snap("B"))
    # Event C
    world.call_at(2900.0, set_timeout(1, 250.0))
    world.schedule(3001.0, CRASH, 2)
    world.call_at(3050.0, set_timeout(2, 200.0))
    world.call_at(3100.0, partition)
    world.schedule(3100.0, RECOVER, 2)
    world.call_at(3200.0, set_timeout(2, 100.0))
    world.call_at(3500.0, heal)
    world.call_at(3900.0, snap("C"))

    world.run(lambda w: w.now >= 4000.0)
    log = list(world.role_log)

    def became(node: int, role: str, term: int, lo: float, hi: float) -> float | None:
        for at, v, r, t in log:
            if v == node and r == role and t == term and lo <= at < hi:
                return at
        return None

    checks: list[ScenarioCheck] = []

    def check(event: str, what: str, ok: bool) -> None:
        checks.append(ScenarioCheck(event, what, bool(ok)))

    # A: 4 -> 5, rival reverts
    a_win = became(1, "coordinator", 5, 1001, 2001)
    a_rival = became(2, "candidate", 5, 1001, 2001)
    a_back = became(2, "follower", 5, a_win or 0, 2001) if a_win else None
    check("A", "server 1 becomes coordinator in term 5", a_win is not None)
    check("A", "server 2 runs as candidate in term 5", a_rival is not None)
    check("A", "server 2 reverts to follower after the new coordinator's heartbeat", a_back is not None)
    check("A", "exactly one coordinator afterwards", snaps.get("A", {}).get("coordinators") == [(1, 5)])

    # B: split in term 6, winner in term 7
    b_c2 = became(2, "candidate", 6, 2001, 3001)
    b_c1 = became(1, "candidate", 6, 2001, 3001)
    split = not any(r == "coordinator" and t == 6 for _, _, r, t in log)
    b_win = became(2, "coordinator", 7, 2001, 3001)
    b_follow = became(1, "follower", 7, 2001, 3001)
    b_roles = snaps.get("B", {}).get("roles", {})
    check("B", "server 2 stands in term 6", b_c2 is not None)
    check("B", "server 1 stands in term 6 after server 2", b_c1 is not None and b_c2 is not None and b_c1 > b_c2)
    check("B", "term 6 ends in a vote split", split)
    check("B", "server 2 wins term 7", b_win is not None)
    check(
        "B",
        "server 1 follows in term 7",
        b_follow is not None and b_roles.get(1) == (Role.FOLLOWER, 7),
    )
    check("B", "exactly one coordinator afterwards", snaps.get("B", {}).get("coordinators") == [(2, 7)])

    # C: 8 and 9 coexist, the term-8 coordinator yields
    c_win8 = became(1, "coordinator", 8, 3001, 4000)
    c_c2 = became(2, "candidate", 8, 3001, 4000)
    c_win9 = became(2, "coordinator", 9, 3001, 4000)
    c_down = became(1, "follower", 9, c_win9 or 0, 4000) if c_win9 else None
    check("C", "server 1 wins term 8", c_win8 is not None)
    check("C", "server 2 stands in term 8 without winning it", c_c2 is not None and became(2, "coordinator", 8, 0, 4000) is None)
    check("C", "server 2 wins term 9", c_win9 is not None)
    check("C", "terms 8 and 9 briefly have coordinators at the same time", c_win9 is not None and c_win8 is not None and (c_down is None or c_down > c_win9))
    stepped_on_receipt = False
    if c_down is not None:
        stamp = f"{c_down:.6f}\tdeliver\t"
        for line in world.trace:
            if line.startswith(stamp):
                parts = line.split("\t")
                if parts[3] == "1" and parts[4] == "HeartbeatReceipt" and "term=9" in parts[5]:
                    stepped_on_receipt = True
    check("C", "the term-8 coordinator steps down on a term-9 heartbeat receipt", stepped_on_receipt)
    check("C", "exactly one coordinator survives", snaps.get("C", {}).get("coordinators") == [(2, 9)])

    terms = [t for _, _, r, t in log if r == "coordinator"]
    check("all", "coordinator terms progress 4, 5, 7, 8, 9", terms == [4, 5, 7, 8, 9])
    return ScenarioVerdict(checks, terms, log, list(world.trace))


# ---------------------------------------------------------------------------
# Election latency
# ---------------------------------------------------------------------------


@dataclass
class ElectionSample:
    n: int
    t_ms: float
    seed: int
    time_ms: float
    splits: int


def measure_election(n: int, t_ms: float, seed: int, *, dl: tuple[float, float] = (5.0, 15.0)) -> ElectionSample:
    """Time from losing the coordinator (all timers fresh at t=0) to the first heartbeat."""
    cfg = SimConfig(n=n, ds=512 * KB, t_ms=t_ms, dl_lo=dl[0], dl_hi=dl[1], seed=seed)
    world = make_world(cfg)
    servers = install_servers(world)
    for v in sorted(servers):
        servers[v].start()
    world.run(lambda w: bool(w.role_log) and w.role_log[-1][2] == "coordinator")
    term = world.role_log[-1][3]
    return ElectionSample(n, t_ms, seed, world.now, term - 1)


def run_election_benchmark(
    n_values: Sequence[int], t_values: Sequence[float], runs: int, *, seed: int = 1
) -> list[ElectionSample]:
    return [
        measure_election(n, t, seed + i)
        for n in n_values
        for t in t_values
        for i in range(runs)
    ]


def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile, q in [0, 1]."""
    data = sorted(values)
    if not data:
        raise ValueError("no data")
    pos = q * (len(data) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(data) - 1)
    return data[lo] + (data[hi] - data[lo]) * (pos - lo)


def election_summary(samples: Sequence[ElectionSample]) -> list[dict]:
    groups: dict[tuple[int, float], list[ElectionSample]] = {}
    for s in samples:
        groups.setdefault((s.n, s.t_ms), []).append(s)
    out = []
    for (n, t), group in groups.items():
        times = [s.time_ms for s in group]
        out.append(
            {
                "n": n,
                "t_ms": t,
                "runs": len(group),
                "min_ms": min(times),
                "p50_ms": quantile(times, 0.5),
                "p90_ms": quantile(times, 0.9),
                "p95_ms": quantile(times, 0.95),
                "max_ms": max(times),
                "split_rounds": sum(s.splits for s in group),
            }
        )
    return out


def election_csv(samples: Sequence[ElectionSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "t_ms", "seed", "time_ms", "splits"))
    for s in samples:
        w.writerow((s.n, repr(float(s.t_ms)), s.seed, repr(s.time_ms), s.splits))
    return buf.getvalue()
