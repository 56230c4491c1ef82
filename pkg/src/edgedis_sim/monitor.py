"""Omniscient safety checks evaluated while a run executes."""

from __future__ import annotations

from .model import Kind, majority


class SafetyMonitor:
    """Collects invariant violations instead of raising, so a run can finish."""

    def __init__(self) -> None:
        self.violations: list[str] = []
        self.coordinator_of_term: dict[int, int] = {}
        self.vote_of: dict[tuple[int, int], int] = {}
        self.last_term: dict[int, int] = {}
        self.commits = 0

    def on_coordinator(self, world, node: int, term: int) -> None:
        prior = self.coordinator_of_term.setdefault(term, node)
        if prior != node:
            self.violations.append(
                f"t={world.now:.3f}: nodes {prior} and {node} both coordinator in term {term}"
            )

    def on_grant(self, world, node: int, term: int, candidate: int) -> None:
        prior = self.vote_of.setdefault((node, term), candidate)
        if prior != candidate:
            self.violations.append(
                f"t={world.now:.3f}: node {node} voted for {prior} and {candidate} in term {term}"
            )

    def on_commit(self, world, node: int, block: int) -> None:
        self.commits += 1
        holders = sum(
            1 for v in range(1, world.n + 1) if world.actors[v].state.status[block]
        )
        if holders < majority(world.n):
            self.violations.append(
                f"t={world.now:.3f}: node {node} committed block {block} with {holders} holders"
            )

    def after_event(self, world, node: int | None) -> None:
        if node is None or node == 0:
            return
        term = world.actors[node].state.term
        if term < self.last_term.get(node, 0):
            self.violations.append(
                f"t={world.now:.3f}: node {node} term fell to {term}"
            )
        self.last_term[node] = term

    def finish(self, world, *, expect_single_exit: bool, expect_no_supplements: bool) -> list[str]:
        if expect_single_exit:
            sent = world.ledger.count(Kind.DATA_BLOCK_DISTRIBUTION)
            if sent != world.block_count:
                self.violations.append(
                    f"{sent} cloud distributions for {world.block_count} blocks"
                )
        if expect_no_supplements and world.stats["supplements"]:
            self.violations.append(f"{world.stats['supplements']} supplements without failures")
        return self.violations
