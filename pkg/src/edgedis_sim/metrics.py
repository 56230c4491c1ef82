"""Per-run cost and overhead accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

from .model import BLOCK_KINDS, CLOUD, HEADER_BYTES, HEARTBEAT_KINDS, Kind, Message


class LedgerEntry(NamedTuple):
    at: float
    msg: Message
    wire_bytes: int
    lost: bool

    @property
    def backhaul(self) -> bool:
        return self.msg.src == CLOUD or self.msg.dst == CLOUD

    @property
    def kind(self) -> Kind:
        return self.msg.kind

    @property
    def blocks(self) -> int:
        return self.msg.blocks_carried


class CostLedger:
    """Append-only record of every transmission attempt in one run.

    Lost block transfers stay in the ledger (the payload did cross the
    network) and are flagged so delivery-chain checks can skip them.
    """

    def __init__(self, block_count: int):
        self.block_count = block_count
        self.entries: list[LedgerEntry] = []
        self.backhaul_blocks = 0
        self.edge_blocks = 0
        self.heartbeat_bytes = 0
        self.control_bytes = 0
        self.lost = 0

    def record(self, at: float, msg: Message, wire: int, lost: bool) -> None:
        self.entries.append(LedgerEntry(at, msg, wire, lost))
        kind = msg.kind
        if kind in BLOCK_KINDS:
            if msg.src == CLOUD or msg.dst == CLOUD:
                self.backhaul_blocks += msg.blocks_carried
            else:
                self.edge_blocks += msg.blocks_carried
            self.control_bytes += HEADER_BYTES
        elif kind in HEARTBEAT_KINDS:
            self.heartbeat_bytes += wire
        else:
            self.control_bytes += wire
        if lost:
            self.lost += 1

    def cost(self, cr: float) -> float:
        return (cr * self.backhaul_blocks + self.edge_blocks) / self.block_count

    def count(self, kind: Kind) -> int:
        return sum(1 for e in self.entries if e.msg.kind == kind)


def cost_of(ledger: CostLedger, cr: float) -> float:
    """Dissemination cost in units of whole-data edge transfers.

    Recomputed from the entries, independent of the running counters.
    """
    total = 0.0
    for e in ledger.entries:
        blocks = e.msg.blocks_carried
        if blocks:
            total += (cr if e.backhaul else 1.0) * blocks
    return total / ledger.block_count if ledger.entries else 0.0


def overhead_of(ledger: CostLedger) -> tuple[int, int]:
    """(control bytes, heartbeat bytes) recomputed from the entries."""
    control = heartbeat = 0
    for e in ledger.entries:
        kind = e.msg.kind
        if kind in BLOCK_KINDS:
            control += HEADER_BYTES
        elif kind in HEARTBEAT_KINDS:
            heartbeat += e.wire_bytes
        else:
            control += e.wire_bytes
    return control, heartbeat


def completion_time(world) -> float:
    """Seconds until the last server's bitmap became full."""
    if world.last_full_at is None or not world.all_full:
        raise ValueError("run did not complete")
    return world.last_full_at / 1000.0


def delivered_blocks(ledger: CostLedger) -> dict[int, set[int]]:
    """Blocks each node received through at least one successful transfer."""
    got: dict[int, set[int]] = {}
    for e in ledger.entries:
        msg = e.msg
        if e.lost or msg.kind not in BLOCK_KINDS:
            continue
        ids = msg.block_ids if msg.block_ids else (msg.block_id,)
        got.setdefault(msg.dst, set()).update(ids)
    return got


@dataclass
class RunResult:
    scheme: str
    time_s: float | None
    cost: float
    control_bytes: int
    heartbeat_bytes: int
    elections: int = 0
    supplements: int = 0
    retransmits: int = 0
    stalled: bool = False

    def as_dict(self) -> dict:
        return asdict(self)
