"""Acceptance suite: thirteen end-to-end criteria at desk scale (64 MB, 512 KB blocks)."""

import statistics

import pytest

from edgedis_sim.config import KB, MB, SimConfig
from edgedis_sim.experiments import (
    SweepSpec,
    election_summary,
    random_case,
    rows_to_csv,
    run_election_benchmark,
    run_safety_case,
    run_sweep,
    run_uniqueness_scenario,
)
from edgedis_sim.runner import simulate

DESK = SimConfig(ds=64 * MB)
# cost is normalized per data item, so a few blocks suffice for the cost oracles
COST = SimConfig(ds=8 * 512 * KB)
N_VALUES = (8, 16, 32, 64, 128)
CR_VALUES = (5.0, 10.0, 20.0, 30.0, 40.0)
SCHEMES = ("edgedis", "datasync", "gossip", "raft", "edda")
COMPETITORS = SCHEMES[1:]


def mean_time(cfg, seeds):
    results = [simulate(cfg.with_(seed=s)) for s in seeds]
    assert not any(r.stalled for r in results), cfg
    return statistics.fmean(r.time_s for r in results)


def cost_grid():
    return [(n, 20.0) for n in N_VALUES] + [(32, cr) for cr in CR_VALUES if cr != 20.0]


@pytest.fixture(scope="module")
def n_trend():
    seeds = range(1, 6)
    runs = {}
    for scheme in SCHEMES:
        for n in N_VALUES:
            runs[scheme, n] = [simulate(DESK.with_(scheme=scheme, n=n, seed=s)) for s in seeds]
    return runs


def test_c01_datasync_cost(verdict):
    got = {(n, cr): simulate(COST.with_(scheme="datasync", n=n, cr=cr)).cost for n, cr in cost_grid()}
    bad = {k: v for k, v in got.items() if v != k[0] * k[1]}
    assert verdict(1, not bad, f"DataSync cost == cr*n on {len(got)} grid points, mismatches {bad}")


@pytest.mark.parametrize("scheme", ["edgedis", "raft"])
def test_c02_edgedis_raft_cost(scheme, verdict):
    got = {(n, cr): simulate(COST.with_(scheme=scheme, n=n, cr=cr)).cost for n, cr in cost_grid()}
    bad = {k: v for k, v in got.items() if abs(v - (k[1] + k[0])) > 1.0}
    assert verdict(
        2, not bad,
        f"{scheme} cost within 1 of cr+n (n=32: {got[32, 20.0]}, n=128: {got[128, 20.0]}), mismatches {bad}",
    )


def test_c03_gossip_cost(verdict):
    ring = simulate(COST.with_(scheme="gossip", nd=1.0)).cost
    dense = [simulate(COST.with_(scheme="gossip", nd=1.4, seed=s)).cost for s in range(1, 21)]
    ok = abs(ring - 52.0) <= 1.0 and all(59.0 <= c <= 66.0 for c in dense)
    assert verdict(3, ok, f"Gossip ring {ring}, nd=1.4 range [{min(dense)}, {max(dense)}] over 20 seeds")


def test_c04_edda_trend(verdict):
    grid = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
    costs = [simulate(COST.with_(scheme="edda", nd=nd)).cost for nd in grid]
    default = simulate(COST.with_(scheme="edda")).cost
    ok = (
        costs[-1] < costs[0]
        and all(b <= a for a, b in zip(costs, costs[1:]))
        and abs(default - 100.4) <= 0.15 * 100.4
    )
    assert verdict(4, ok, f"EDD-A cost over nd {grid}: {costs}; default {default} vs 100.4 +-15%")


def test_c05_speed(n_trend, verdict):
    seeds = range(1, 21)
    means = {s: mean_time(DESK.with_(scheme=s), seeds) for s in SCHEMES}
    ratio = min(means[s] for s in COMPETITORS) / means["edgedis"]
    trend = {s: [statistics.fmean(r.time_s for r in n_trend[s, n]) for n in N_VALUES] for s in SCHEMES}
    falls = all(b < a for a, b in zip(trend["edgedis"], trend["edgedis"][1:]))
    rises = all(all(b >= a for a, b in zip(trend[s], trend[s][1:])) for s in COMPETITORS)
    detail = (
        f"EdgeDis {means['edgedis']:.2f}s, closest competitor {ratio:.2f}x slower; "
        + "; ".join(f"{s} " + "/".join(f"{t:.2f}" for t in trend[s]) for s in SCHEMES)
    )
    assert verdict(5, ratio > 4.0 and falls and rises, detail)


def test_c06_failure_sensitivity(verdict):
    seeds = range(1, 21)
    rise = {}
    for scheme in ("edgedis", "datasync"):
        base = mean_time(DESK.with_(scheme=scheme), seeds)
        lossy = mean_time(DESK.with_(scheme=scheme, r=0.01), seeds)
        rise[scheme] = lossy / base - 1.0
    ok = rise["edgedis"] <= 0.03 and rise["datasync"] >= 0.10
    assert verdict(6, ok, f"r 0 -> 1%: EdgeDis +{rise['edgedis']:.2%}, DataSync +{rise['datasync']:.2%}")


@pytest.fixture(scope="module")
def safety_runs():
    return [run_safety_case(random_case(i), i) for i in range(500)]


def test_c07_safety(safety_runs, verdict):
    bad = [(o.case, v) for o in safety_runs for v in o.violations if "stalled" not in v]
    crashed = sum(1 for o in safety_runs if o.cfg.crashes)
    assert verdict(7, not bad, f"500 randomized runs ({crashed} with crashes), violations {bad[:3]}")


def test_c08_liveness(safety_runs, verdict):
    stuck = [o.case for o in safety_runs if o.result.stalled]
    assert verdict(8, not stuck, f"all 500 runs filled every bitmap; stalled cases {stuck}")


def test_c09_uniqueness_scenario(verdict):
    v = run_uniqueness_scenario()
    ok = v.passed and v.coordinator_terms == [4, 5, 7, 8, 9]
    failed = [c.what for c in v.failures()]
    assert verdict(9, ok, f"coordinator terms {v.coordinator_terms}, failed checks {failed}")


def test_c10_election_latency(verdict):
    samples = run_election_benchmark([8, 128], [250.0], 100)
    summary = {row["n"]: row for row in election_summary(samples)}
    small = [s.time_ms for s in samples if s.n == 8]
    ok = (
        min(small) >= 250.0
        and 250.0 <= summary[8]["p50_ms"] <= 320.0
        and summary[128]["p95_ms"] > summary[8]["p95_ms"]
    )
    detail = (
        f"n=8 min {min(small):.1f} median {summary[8]['p50_ms']:.1f} p95 {summary[8]['p95_ms']:.1f} ms; "
        f"n=128 p95 {summary[128]['p95_ms']:.1f} ms"
    )
    assert verdict(10, ok, detail)


@pytest.mark.xfail(
    strict=True,
    reason="heartbeats only reach the n-1 followers and start after the first election",
)
def test_c11_overhead(n_trend, verdict):
    runs = {n: n_trend["edgedis", n] for n in N_VALUES}
    worst = min(
        r.heartbeat_bytes / (24 * n * r.time_s * 1000.0 / DESK.heartbeat_ms)
        for n in N_VALUES
        for r in runs[n]
    )
    per_receiver = [
        statistics.fmean((r.heartbeat_bytes + r.control_bytes) / (n - 1) for r in runs[n])
        for n in (8, 16, 32, 64)
    ]
    falls = all(b < a for a, b in zip(per_receiver, per_receiver[1:]))
    detail = (
        f"min heartbeatBytes / (24*n*T/ti) = {worst:.3f}; "
        f"overhead per receiver n=8..64 {[round(x) for x in per_receiver]} (falls: {falls})"
    )
    assert verdict(11, worst >= 1.0 and falls, detail)


def test_c12_determinism(verdict):
    spec = SweepSpec(
        SimConfig(n=16, ds=16 * 512 * KB, r=0.01),
        [("scheme", list(SCHEMES)), ("nd", [1.0, 1.4])],
        runs=2,
    )
    outputs = []
    for _ in range(2):
        trace: list[str] = []
        outputs.append((rows_to_csv(run_sweep(spec, trace_out=trace)), "\n".join(trace)))
    same = outputs[0] == outputs[1]
    assert verdict(12, same, f"two sweeps of 20 rows: CSV and {len(outputs[0][1])} trace bytes identical")


def test_c13_bandwidth_ablation(verdict):
    seeds = range(1, 51)
    gaps = []
    for lo in (0.8, 0.6, 0.4, 0.2):
        cfg = DESK.with_(bw_range=(lo, 1.0))
        smart = mean_time(cfg, seeds)
        rnd = mean_time(cfg.with_(scheme="edgedis-rnd"), seeds)
        gaps.append(rnd / smart - 1.0)
    widens = all(b > a for a, b in zip(gaps, gaps[1:]))
    ok = gaps[1] > 0.0 and widens
    detail = "EdgeDis-RND slower by " + ", ".join(
        f"{g:.1%} at [{lo}, 1]" for g, lo in zip(gaps, (0.8, 0.6, 0.4, 0.2))
    )
    assert verdict(13, ok, detail)
