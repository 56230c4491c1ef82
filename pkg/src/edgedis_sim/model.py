"""Domain types shared by every part of the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

CLOUD = 0
HEADER_BYTES = 12
BLOCK_ID_BYTES = 4


def partition(data_size: int, block_size: int) -> int:
    """Number of blocks needed to carry ``data_size`` bytes."""
    if data_size < 1 or block_size < 1:
        raise ValueError("data_size and block_size must be positive")
    return -(-data_size // block_size)


def majority(n: int) -> int:
    """Smallest group of ``n`` servers that forms a majority: ceil((n + 1) / 2)."""
    if n < 1:
        raise ValueError("majority() needs at least one server")
    return (n + 2) // 2


@dataclass(frozen=True)
class DataSpec:
    data_size: int
    block_size: int

    def __post_init__(self) -> None:
        partition(self.data_size, self.block_size)

    @property
    def block_count(self) -> int:
        return partition(self.data_size, self.block_size)


class Role(Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    COORDINATOR = "coordinator"


class Kind(IntEnum):
    DATA_BLOCK_DISTRIBUTION = 1
    DISTRIBUTION_COMPLETION = 2
    BLOCK_TRANSMISSION = 3
    BLOCK_RECEIPT = 4
    HEARTBEAT = 5
    HEARTBEAT_RECEIPT = 6
    BLOCK_REQUEST = 7
    BLOCK_RESPONSE = 8
    BLOCK_SUPPLEMENT = 9
    VOTE_REQUEST = 10
    VOTE_RESPONSE = 11


BLOCK_KINDS = frozenset(
    {
        Kind.DATA_BLOCK_DISTRIBUTION,
        Kind.BLOCK_TRANSMISSION,
        Kind.BLOCK_SUPPLEMENT,
        Kind.BLOCK_RESPONSE,
    }
)
HEARTBEAT_KINDS = frozenset({Kind.HEARTBEAT, Kind.HEARTBEAT_RECEIPT})

KIND_NAMES = {k: "".join(p.title() for p in k.name.split("_")) for k in Kind}


@dataclass(slots=True)
class Message:
    kind: Kind
    src: int
    dst: int
    block_id: int = 0
    block_ids: tuple[int, ...] = ()
    status: bool = True
    max_block_id: int = 0
    miss_block_ids: tuple[int, ...] = ()
    term: int = 0
    coordinator_id: int | None = None
    candidate_id: int = 0
    total_blocks: int = 0
    supported: bool = False

    @property
    def blocks_carried(self) -> int:
        if self.kind in (Kind.DATA_BLOCK_DISTRIBUTION, Kind.BLOCK_TRANSMISSION):
            return 1
        if self.kind in (Kind.BLOCK_SUPPLEMENT, Kind.BLOCK_RESPONSE):
            return len(self.block_ids)
        return 0

    def fields(self) -> str:
        """Compact kind-specific payload, used in trace lines."""
        k = self.kind
        if k in (Kind.HEARTBEAT, Kind.VOTE_REQUEST, Kind.VOTE_RESPONSE):
            extra = {
                Kind.HEARTBEAT: f"max={self.max_block_id}",
                Kind.VOTE_REQUEST: f"blocks={self.total_blocks}",
                Kind.VOTE_RESPONSE: f"ok={int(self.supported)}",
            }[k]
            return f"term={self.term} {extra}"
        if k == Kind.HEARTBEAT_RECEIPT:
            miss = ",".join(map(str, self.miss_block_ids))
            return f"term={self.term} max={self.max_block_id} miss={miss}"
        if self.block_ids:
            return "blocks=" + ",".join(map(str, self.block_ids))
        return f"block={self.block_id}"


def wire_bytes(msg: Message, block_size: int) -> int:
    """Bytes a message occupies on the wire.

    Every message has a 12-byte header. Heartbeat receipts add 4 bytes per
    missing block id; block-bearing kinds add one ``block_size`` per block.
    """
    size = HEADER_BYTES
    if msg.kind == Kind.HEARTBEAT_RECEIPT:
        size += BLOCK_ID_BYTES * len(msg.miss_block_ids)
    return size + block_size * msg.blocks_carried


@dataclass
class NodeState:
    """Protocol state of one edge server. Block ids run from 1 to ``block_count``."""

    id: int
    block_count: int
    outbound_bandwidth: float
    role: Role = Role.FOLLOWER
    term: int = 0
    supported_id: int | None = None
    coordinator_id: int | None = None
    max_block_id: int = 0
    held: int = 0
    pending_retransmit: dict[int, set[int]] = field(default_factory=dict)
    election_deadline: float = 0.0
    status: bytearray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.status = bytearray(self.block_count + 1)
        self._low = 1  # every id below this is held

    def has(self, block_id: int) -> bool:
        return bool(self.status[block_id])

    def store(self, block_id: int) -> bool:
        """Mark a block as held; returns True when it was new."""
        if self.status[block_id]:
            return False
        self.status[block_id] = 1
        self.held += 1
        if block_id > self.max_block_id:
            self.max_block_id = block_id
        return True

    @property
    def complete(self) -> bool:
        return self.held == self.block_count

    def missing_up_to(self, limit: int) -> list[int]:
        status = self.status
        low = self._low
        while low <= self.block_count and status[low]:
            low += 1
        self._low = low
        return [i for i in range(low, limit + 1) if not status[i]]

    def adopt_term(self, term: int) -> None:
        if term > self.term:
            self.term = term
            self.supported_id = None


@dataclass
class CloudState:
    """Cloud-side view of stage-1 distribution progress."""

    block_count: int
    entry_servers: list[int]
    in_flight: dict[int, tuple[int, float]] = field(default_factory=dict)
    entry_slot: dict[int, int | None] = field(default_factory=dict)
    next_block: int = 1
    confirmed: int = 0
    status: bytearray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.status = bytearray(self.block_count + 1)
        for e in self.entry_servers:
            self.entry_slot.setdefault(e, None)

    @property
    def done(self) -> bool:
        return self.confirmed == self.block_count


def ceil_fraction(fraction: float, n: int) -> int:
    return max(1, math.ceil(fraction * n - 1e-9))
