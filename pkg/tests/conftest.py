import pytest

from edgedis_sim.config import KB, SimConfig, make_world
from edgedis_sim.edgedis import EdgeDisCloud, install_servers


def bare_world(n=4, blocks=4, **overrides):
    """World with edge servers installed but nothing started."""
    cfg = SimConfig(n=n, nd=1.0 if n > 2 else 0.5, ds=blocks * 512 * KB, **overrides)
    world = make_world(cfg, trace=True)
    servers = install_servers(world)
    return world, servers


def sent(world, since=0):
    return [e.msg for e in world.ledger.entries[since:]]


@pytest.fixture
def world4():
    return bare_world(4, 8)


def with_cloud(world, entries):
    return EdgeDisCloud(world, entries)


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
