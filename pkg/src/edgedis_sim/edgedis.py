"""EdgeDis: cloud distribution, majority fan-out, and the coordinator loop."""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .model import (
    CLOUD,
    HEADER_BYTES,
    CloudState,
    Kind,
    Message,
    NodeState,
    Role,
    ceil_fraction,
    majority,
)

NEVER = -math.inf


def select_entry_servers(nodes: Sequence[NodeState], fraction: float) -> list[int]:
    """Top ``ceil(fraction * n)`` nodes by outbound bandwidth, ties to the lower id."""
    if not nodes:
        raise ValueError("no edge servers to choose from")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    k = ceil_fraction(fraction, len(nodes))
    ranked = sorted(nodes, key=lambda s: (-s.outbound_bandwidth, s.id))
    return [s.id for s in ranked[:k]]


# ---------------------------------------------------------------------------
# Cloud side
# ---------------------------------------------------------------------------


class EdgeDisCloud:
    """Stage 1: one uncommitted block per entry server, resend on silence.

    The cloud first waits ``dist_timeout`` from departure for the entry's
    block receipt; once acknowledged, it allows the entry a full fan-out plus
    ``dist_timeout`` before assuming the entry failed mid-distribution.
    """

    def __init__(self, world, entries: Sequence[int]):
        cfg = world.config
        self.world = world
        self.cfg = cfg
        self.state = CloudState(world.block_count, list(entries))
        # block -> [target, acked, generation, slot]
        self.tracking: dict[int, list] = {}
        self._gen = 0
        world.actors[CLOUD] = self

    def start(self) -> list[Message]:
        return self.dispatch()

    def dispatch(self) -> list[Message]:
        st = self.state
        out = []
        for e in st.entry_servers:
            if st.next_block > st.block_count:
                break
            if st.entry_slot.get(e) is None:
                b = st.next_block
                st.next_block += 1
                out.append(self._send(b, e, slot=e))
        return out

    def _send(self, block: int, target: int, slot: int | None) -> Message:
        world = self.world
        msg = Message(Kind.DATA_BLOCK_DISTRIBUTION, CLOUD, target, block_id=block)
        depart, _ = world.send(msg)
        self._gen += 1
        deadline = depart + self.cfg.dist_timeout_ms
        self.tracking[block] = [target, False, self._gen, slot]
        if slot is not None:
            self.state.entry_slot[slot] = block
        self.state.in_flight[block] = (target, deadline)
        world.set_timer(CLOUD, deadline, "deadline", (block, self._gen))
        return msg

    def fanout_allowance(self, node: int) -> float:
        world = self.world
        per_copy = world.serialization_ms(node, world.block_size + HEADER_BYTES)
        return (world.n - 1) * per_copy + 2 * self.cfg.dl_hi + self.cfg.dist_timeout_ms

    # -- message handlers --------------------------------------------------
    def deliver(self, msg: Message) -> None:
        if msg.kind == Kind.BLOCK_RECEIPT:
            self.on_receipt(msg)
        elif msg.kind == Kind.DISTRIBUTION_COMPLETION:
            self.on_completion(msg)

    def on_receipt(self, msg: Message) -> None:
        rec = self.tracking.get(msg.block_id)
        if rec is None or rec[0] != msg.src or rec[1]:
            return
        rec[1] = True
        self._gen += 1
        rec[2] = self._gen
        deadline = self.world.now + self.fanout_allowance(msg.src)
        self.state.in_flight[msg.block_id] = (msg.src, deadline)
        self.world.set_timer(CLOUD, deadline, "deadline", (msg.block_id, self._gen))

    def on_completion(self, msg: Message) -> list[Message]:
        st = self.state
        b = msg.block_id
        if st.status[b]:
            return []
        st.status[b] = 1
        st.confirmed += 1
        rec = self.tracking.pop(b, None)
        st.in_flight.pop(b, None)
        if rec is not None and rec[3] is not None and st.entry_slot.get(rec[3]) == b:
            st.entry_slot[rec[3]] = None
        return self.dispatch()

    def on_timer(self, kind: str, data) -> None:
        block, gen = data
        rec = self.tracking.get(block)
        if rec is None or rec[2] != gen or self.state.status[block]:
            return
        self.on_distribution_timeout(block)

    def on_distribution_timeout(self, block: int) -> Message:
        st = self.state
        old, _, _, slot = self.tracking[block]
        if slot is not None and st.entry_slot.get(slot) == block:
            st.entry_slot[slot] = None
        target, slot = self.retarget(old)
        self.world.stats["retransmits"] += 1
        msg = self._send(block, target, slot)
        self.dispatch()
        return msg

    def retarget(self, old: int) -> tuple[int, int | None]:
        n = self.world.n
        if n == 1:
            return old, None
        pick = self.world.rng.randrange(1, n)
        return (pick if pick < old else pick + 1), None

    def on_crash(self) -> None:  # the cloud is assumed reliable
        pass

    def on_recover(self) -> None:
        pass

    def describe(self) -> dict:
        st = self.state
        return {"confirmed": st.confirmed, "next": st.next_block, "in_flight": dict(st.in_flight)}


# ---------------------------------------------------------------------------
# Edge server
# ---------------------------------------------------------------------------


class EdgeServer:
    """One edge server running all three EdgeDis stages and the election."""

    def __init__(self, world, node_id: int):
        cfg = world.config
        self.world = world
        self.cfg = cfg
        self.id = node_id
        self.n = world.n
        self.state = NodeState(node_id, world.block_count, world.topology.bandwidths[node_id])
        self.others = tuple(v for v in range(1, self.n + 1) if v != node_id)
        self.need = majority(self.n) - 1
        self.receipts: dict[int, set[int]] = {}
        self.committed: set[int] = set()
        self.sender_of: dict[int, int] = {}
        self._retx_gen: dict[int, int] = {}
        self._election_gen = 0
        self._election_armed = False
        self._epoch = 0
        self.votes: set[int] = set()
        # scenario hook: fixed election timeout in ms instead of U(t, 2t)
        self.fixed_timeout: float | None = None
        self._reset_coordinator_books()
        world.actors[node_id] = self

    # -- helpers -------------------------------------------------------------
    def _send(self, msg: Message) -> float:
        return self.world.send(msg)[0]

    def _store(self, block: int) -> bool:
        st = self.state
        if st.store(block):
            if st.complete:
                self.world.node_full(self.id)
            return True
        return False

    def _set_role(self, role: Role) -> None:
        st = self.state
        if st.role is role:
            return
        st.role = role
        self.world.role_log.append((self.world.now, self.id, role.value, st.term))

    def _adopt_term(self, term: int) -> None:
        """Move to a larger term; coordinators and candidates fall back to follower."""
        st = self.state
        if term <= st.term:
            return
        st.adopt_term(term)
        if st.role is not Role.FOLLOWER:
            was_coordinator = st.role is Role.COORDINATOR
            self._set_role(Role.FOLLOWER)
            if was_coordinator:
                self._epoch += 1
                self._reset_coordinator_books()
            self.arm_election()

    def _reset_coordinator_books(self) -> None:
        self.last_heard: dict[int, float] = {}
        self.suspected: set[int] = set()
        self.follower_miss: dict[int, frozenset[int]] = {}
        self.requested: dict[int, float] = {}
        self.supplied: dict[tuple[int, int], float] = {}
        self.supplement_pending: set[int] = set()

    # -- dispatch ------------------------------------------------------------
    def deliver(self, msg: Message) -> None:
        k = msg.kind
        if k == Kind.BLOCK_TRANSMISSION:
            self.receiver_on_block(msg)
        elif k == Kind.BLOCK_RECEIPT:
            self.sender_on_receipt(msg)
        elif k == Kind.HEARTBEAT:
            self.follower_on_heartbeat(msg)
        elif k == Kind.HEARTBEAT_RECEIPT:
            self.coordinator_on_heartbeat_receipt(msg)
        elif k == Kind.DATA_BLOCK_DISTRIBUTION:
            self.sender_on_block(msg)
        elif k == Kind.VOTE_REQUEST:
            self.on_vote_request(msg)
        elif k == Kind.VOTE_RESPONSE:
            self.on_vote_response(msg)
        elif k in (Kind.BLOCK_SUPPLEMENT, Kind.BLOCK_RESPONSE):
            self.receiver_on_block(msg)
        elif k == Kind.BLOCK_REQUEST:
            self.follower_on_block_request(msg)

    def on_timer(self, kind: str, data) -> None:
        if kind == "retransmit":
            block, gen = data
            if self._retx_gen.get(block) == gen:
                self.sender_retransmit_tick(block)
        elif kind == "election":
            if data == self._election_gen:
                self._election_armed = False
                self._election_fire()
        elif kind == "heartbeat":
            if data == self._epoch and self.state.role is Role.COORDINATOR:
                self.coordinator_heartbeat_tick()
        elif kind == "supplement":
            epoch, follower = data
            if epoch == self._epoch:
                self.supplement_pending.discard(follower)
                if self.state.role is Role.COORDINATOR:
                    self.coordinator_supplement(follower)

    def on_crash(self) -> None:
        st = self.state
        if st.role is not Role.FOLLOWER:
            self._set_role(Role.FOLLOWER)
        self._epoch += 1
        self._election_gen += 1
        self._election_armed = False
        self.votes = set()
        self._reset_coordinator_books()

    def on_recover(self) -> None:
        self.arm_election()
        for block, pending in sorted(self.state.pending_retransmit.items()):
            if pending:
                self._arm_retransmit(block, self.world.now)

    def start(self) -> None:
        self.arm_election()

    def describe(self) -> dict:
        st = self.state
        return {
            "role": st.role.value,
            "term": st.term,
            "held": st.held,
            "pending": {b: sorted(p) for b, p in st.pending_retransmit.items() if p},
        }

    # -- stage 2: sender -----------------------------------------------------
    def sender_on_block(self, msg: Message) -> list[Message]:
        st = self.state
        b = msg.block_id
        self._store(b)
        self.sender_of.setdefault(b, self.id)
        out = [Message(Kind.BLOCK_RECEIPT, self.id, CLOUD, block_id=b)]
        self._send(out[0])
        pending = st.pending_retransmit.get(b)
        if pending is None:
            targets = self.others
            st.pending_retransmit[b] = set(targets)
            self.receipts[b] = set()
            if self.need == 0:
                self._commit(b)
        else:
            targets = tuple(sorted(pending))
            if b in self.committed:
                done = Message(Kind.DISTRIBUTION_COMPLETION, self.id, CLOUD, block_id=b)
                self._send(done)
                out.append(done)
            self.world.stats["retransmits"] += len(targets)
        last = self.world.now
        for v in targets:
            m = Message(Kind.BLOCK_TRANSMISSION, self.id, v, block_id=b)
            last = self._send(m)
            out.append(m)
        if targets:
            self._arm_retransmit(b, last)
        return out

    def _arm_retransmit(self, block: int, last_departure: float) -> None:
        gen = self._retx_gen.get(block, 0) + 1
        self._retx_gen[block] = gen
        self.world.set_timer(
            self.id, last_departure + self.cfg.trans_timeout_ms, "retransmit", (block, gen)
        )

    def _commit(self, block: int) -> Message:
        self.committed.add(block)
        mon = self.world.monitor
        if mon is not None:
            mon.on_commit(self.world, self.id, block)
        done = Message(Kind.DISTRIBUTION_COMPLETION, self.id, CLOUD, block_id=block)
        self._send(done)
        return done

    def sender_on_receipt(self, msg: Message) -> Message | None:
        b = msg.block_id
        pending = self.state.pending_retransmit.get(b)
        if pending is None:
            return None
        pending.discard(msg.src)
        got = self.receipts[b]
        if msg.src in got:
            return None
        got.add(msg.src)
        if len(got) == self.need and b not in self.committed:
            return self._commit(b)
        return None

    def sender_retransmit_tick(self, block: int) -> list[Message]:
        pending = self.state.pending_retransmit.get(block)
        if not pending:
            self._retx_gen.pop(block, None)
            return []
        out = []
        last = self.world.now
        for v in sorted(pending):
            m = Message(Kind.BLOCK_TRANSMISSION, self.id, v, block_id=block)
            last = self._send(m)
            out.append(m)
        self.world.stats["retransmits"] += len(out)
        self._arm_retransmit(block, last)
        return out

    # -- stage 2: receiver ---------------------------------------------------
    def receiver_on_block(self, msg: Message) -> Message | None:
        if msg.kind == Kind.BLOCK_TRANSMISSION:
            b = msg.block_id
            self._store(b)
            self.sender_of.setdefault(b, msg.src)
            receipt = Message(Kind.BLOCK_RECEIPT, self.id, msg.src, block_id=b)
            self._send(receipt)
            return receipt
        if msg.kind == Kind.DATA_BLOCK_DISTRIBUTION:
            self._store(msg.block_id)
            return None
        for b in msg.block_ids:
            self._store(b)
        return None

    # -- stage 3: coordinator --------------------------------------------------
    def coordinator_heartbeat_tick(self) -> list[Message]:
        st = self.state
        if st.role is not Role.COORDINATOR:
            return []
        now = self.world.now
        limit = self.cfg.t_ms
        heard = self.last_heard
        self.suspected = {v for v in self.others if now - heard.get(v, now) > limit}
        out = []
        for v in self.others:
            hb = Message(
                Kind.HEARTBEAT,
                self.id,
                v,
                max_block_id=st.max_block_id,
                term=st.term,
                coordinator_id=self.id,
            )
            self._send(hb)
            out.append(hb)
        self.world.set_timer(self.id, now + self.cfg.heartbeat_ms, "heartbeat", self._epoch)
        return out

    def follower_on_heartbeat(self, msg: Message) -> Message:
        st = self.state
        if msg.term >= st.term:
            self._adopt_term(msg.term)
            st.coordinator_id = msg.coordinator_id
            if st.role is Role.CANDIDATE:
                self._set_role(Role.FOLLOWER)
            self.arm_election()
        if msg.max_block_id > st.max_block_id:
            st.max_block_id = msg.max_block_id
        receipt = Message(
            Kind.HEARTBEAT_RECEIPT,
            self.id,
            msg.src,
            max_block_id=st.max_block_id,
            miss_block_ids=tuple(st.missing_up_to(st.max_block_id)),
            term=st.term,
        )
        self._send(receipt)
        return receipt

    def _eligible(self, block: int) -> bool:
        """Whether repair of ``block`` is warranted: its sender looks dead."""
        sender = self.sender_of.get(block)
        if sender is None:
            return bool(self.suspected)
        return sender in self.suspected

    def coordinator_on_heartbeat_receipt(self, msg: Message) -> list[Message]:
        st = self.state
        if st.role is not Role.COORDINATOR:
            return []
        if msg.term > st.term:
            self._adopt_term(msg.term)
            return []
        f = msg.src
        now = self.world.now
        self.last_heard[f] = now
        self.suspected.discard(f)
        miss = frozenset(msg.miss_block_ids)
        self.follower_miss[f] = miss
        if msg.max_block_id > st.max_block_id:
            st.max_block_id = msg.max_block_id
        if not self.suspected:
            return []
        out = []
        retry = self.cfg.trans_timeout_ms
        want = [
            i
            for i in st.missing_up_to(min(st.max_block_id, msg.max_block_id))
            if i not in miss and self._eligible(i) and now - self.requested.get(i, NEVER) >= retry
        ]
        if want:
            req = Message(Kind.BLOCK_REQUEST, self.id, f, block_ids=tuple(want))
            self._send(req)
            out.append(req)
            for i in want:
                self.requested[i] = now
        if f not in self.supplement_pending and any(
            st.has(i) and self._eligible(i) and self.supplied.get((f, i), NEVER) <= now
            for i in miss
        ):
            self.supplement_pending.add(f)
            self.world.set_timer(
                self.id, now + 2 * self.cfg.dl_hi, "supplement", (self._epoch, f)
            )
        return out

    def coordinator_supplement(self, follower: int) -> Message | None:
        st = self.state
        now = self.world.now
        ids = tuple(
            sorted(
                i
                for i in self.follower_miss.get(follower, ())
                if st.has(i) and self._eligible(i) and self.supplied.get((follower, i), NEVER) <= now
            )
        )
        if not ids:
            return None
        msg = Message(Kind.BLOCK_SUPPLEMENT, self.id, follower, block_ids=ids)
        depart = self._send(msg)
        hold = depart + 2 * self.cfg.dl_hi + 2 * self.cfg.heartbeat_ms
        for i in ids:
            self.supplied[(follower, i)] = hold
        self.world.stats["supplements"] += 1
        return msg

    def follower_on_block_request(self, req: Message) -> Message:
        st = self.state
        ids = tuple(i for i in req.block_ids if st.has(i))
        resp = Message(Kind.BLOCK_RESPONSE, self.id, req.src, block_ids=ids)
        self._send(resp)
        return resp

    # -- election --------------------------------------------------------------
    def election_timeout(self) -> float:
        if self.fixed_timeout is not None:
            return self.fixed_timeout
        t = self.cfg.t_ms
        return self.world.rng.uniform(t, 2 * t)

    def arm_election(self) -> None:
        """(Re)start the coordinator-loss timer.

        Only one timer event is kept in the queue; a later deadline simply
        pushes the pending event forward when it fires.
        """
        st = self.state
        st.election_deadline = self.world.now + self.election_timeout()
        if not self._election_armed:
            self._election_armed = True
            self.world.set_timer(self.id, st.election_deadline, "election", self._election_gen)

    def _election_fire(self) -> None:
        st = self.state
        if st.role is Role.COORDINATOR:
            return
        if self.world.now < st.election_deadline:
            self._election_armed = True
            self.world.set_timer(self.id, st.election_deadline, "election", self._election_gen)
            return
        self.on_coordinator_timeout()

    def on_coordinator_timeout(self) -> list[Message]:
        st = self.state
        world = self.world
        st.term += 1
        st.supported_id = self.id
        st.coordinator_id = None
        self._set_role(Role.CANDIDATE)
        self.votes = {self.id}
        world.stats["elections"] += 1
        mon = world.monitor
        if mon is not None:
            mon.on_grant(world, self.id, st.term, self.id)
        self.arm_election()
        if len(self.votes) >= self.need + 1:
            self._become_coordinator()
            return []
        out = []
        for v in self.others:
            req = Message(
                Kind.VOTE_REQUEST,
                self.id,
                v,
                term=st.term,
                candidate_id=self.id,
                total_blocks=st.held,
            )
            self._send(req)
            out.append(req)
        return out

    def on_vote_request(self, req: Message) -> Message:
        st = self.state
        grant = req.total_blocks >= st.held and (
            req.term > st.term or (req.term == st.term and st.supported_id is None)
        )
        if grant:
            self._adopt_term(req.term)
            st.supported_id = req.candidate_id
            mon = self.world.monitor
            if mon is not None:
                mon.on_grant(self.world, self.id, st.term, req.candidate_id)
            self.arm_election()
        resp = Message(Kind.VOTE_RESPONSE, self.id, req.src, term=st.term, supported=grant)
        self._send(resp)
        return resp

    def on_vote_response(self, res: Message) -> None:
        st = self.state
        if res.term > st.term:
            self._adopt_term(res.term)
            return
        if st.role is not Role.CANDIDATE or res.term < st.term or not res.supported:
            return
        self.votes.add(res.src)
        if len(self.votes) >= self.need + 1:
            self._become_coordinator()

    def _become_coordinator(self) -> None:
        st = self.state
        world = self.world
        self._set_role(Role.COORDINATOR)
        st.coordinator_id = self.id
        self._election_gen += 1
        self._election_armed = False
        self._epoch += 1
        self._reset_coordinator_books()
        now = world.now
        self.last_heard = {v: now for v in self.others}
        mon = world.monitor
        if mon is not None:
            mon.on_coordinator(world, self.id, st.term)
        self.coordinator_heartbeat_tick()


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def install_servers(world, server_cls: type = EdgeServer) -> dict[int, EdgeServer]:
    return {v: server_cls(world, v) for v in range(1, world.n + 1)}


def setup_edgedis(world, entry_picker: Callable | None = None) -> EdgeDisCloud:
    servers = install_servers(world)
    states = [s.state for s in servers.values()]
    if entry_picker is None:
        entries = select_entry_servers(states, world.config.entry_fraction)
    else:
        entries = entry_picker(world, states)
    cloud = EdgeDisCloud(world, entries)
    for v in sorted(servers):
        servers[v].start()
    cloud.start()
    return cloud


def random_entries(world, states: Sequence[NodeState]) -> list[int]:
    from .simnet import stream

    k = ceil_fraction(world.config.entry_fraction, len(states))
    ids = sorted(s.id for s in states)
    return stream(world.seed, "entries").sample(ids, k)
