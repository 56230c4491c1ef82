from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from edgedis_sim.config import KB, SimConfig
from edgedis_sim.experiments import random_case, run_safety_case
from edgedis_sim.model import Kind
from edgedis_sim.runner import run


@st.composite
def configs(draw):
    n = draw(st.integers(4, 12))
    blocks = draw(st.integers(2, 10))
    nd = draw(st.sampled_from([1.0, 1.2, 1.5]))
    r = draw(st.sampled_from([0.0, 0.005, 0.01]))
    crashes = []
    for _ in range(draw(st.integers(0, 3))):
        node = draw(st.integers(1, n))
        at = draw(st.floats(0.0, 1500.0, allow_nan=False).map(lambda x: round(x, 3)))
        down = draw(st.floats(50.0, 1500.0, allow_nan=False).map(lambda x: round(x, 3)))
        crashes += [(at, "crash", node), (round(at + down, 3), "recover", node)]
    seed = draw(st.integers(1, 10_000))
    return SimConfig(n=n, nd=nd, r=r, ds=blocks * 512 * KB, seed=seed, crashes=tuple(sorted(crashes)))


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(configs())
def test_safety_and_liveness(cfg):
    outcome = run_safety_case(cfg)
    assert outcome.violations == []
    assert not outcome.result.stalled


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 12), st.integers(1, 8), st.integers(1, 1000))
def test_failure_free_runs_leave_cloud_once_per_block(n, blocks, seed):
    res, world = run(SimConfig(n=n, nd=1.0, ds=blocks * 512 * KB, seed=seed))
    assert world.ledger.count(Kind.DATA_BLOCK_DISTRIBUTION) == blocks
    assert res.supplements == 0
    assert res.cost == 20 + n - 1


def test_random_cases_are_reproducible():
    assert random_case(17) == random_case(17)
    a = run_safety_case(random_case(17), 17)
    b = run_safety_case(random_case(17), 17)
    assert a.result == b.result
