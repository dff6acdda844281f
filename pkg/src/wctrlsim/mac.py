"""TDMA cycle construction, flooding time sync, and in-cycle retransmission.

One cycle (superframe) is built as:

    [sync flood] [uplink FB slot per loop] [compute gap] [downlink CMD slot per loop]
    [shared retx flood slots]

Feedback slots always precede command slots, so every loop closes within a
single cycle on fresh feedback.  The compute gap is a scheduled entry like any
slot but is extended by the configured gap time; it carries no transmission.

Duplexing is modeled as two disjoint channel sets (forward band for sync,
commands and retransmissions; feedback band for uplink slots), both indexed by
per-band hop sequences: the concrete channel of slot `i` in cycle `c` is
`hop[(c + i) % len(hop)]`.

The slot layout, the shared retransmission pool, and the flooding sync wave
rules here are documented reconstructions of a proprietary industrial MAC;
scenario configs expose every constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .channel import Medium, ReceptionOutcome, Transmission
from .engine import Engine, SimTime
from .frames import Frame, SyncFrame


class ScheduleError(ValueError):
    """Invalid loop set or protocol constants."""


class Direction(Enum):
    SYNC = "sync"
    UPLINK = "uplink"
    DOWNLINK = "downlink"
    RETX = "retx"
    GAP = "gap"


class Band(Enum):
    FORWARD = "forward"
    FEEDBACK = "feedback"


@dataclass(frozen=True)
class LoopSpec:
    """One control loop: a controller driving one plant, with optional relays."""

    loop_id: int
    controller: int
    plant: int
    relays: tuple[int, ...] = ()


@dataclass(frozen=True)
class Slot:
    position: int
    direction: Direction
    band: Band
    owner: int | None  # transmitting node; None for flood and gap slots
    loop_id: int | None = None


def cycle_length_us(n_slots: int, slot_duration_us: int, compute_gap_us: int) -> int:
    """Cycle duration: every scheduled entry takes one slot, plus the compute gap."""
    return n_slots * slot_duration_us + compute_gap_us


@dataclass(frozen=True)
class CycleSchedule:
    """The per-cycle slot layout plus hop sequences; identical for every cycle."""

    slots: tuple[Slot, ...]
    slot_duration_us: int
    compute_gap_us: int
    hop_forward: tuple[int, ...]
    hop_feedback: tuple[int, ...]

    @property
    def cycle_length_us(self) -> int:
        return cycle_length_us(len(self.slots), self.slot_duration_us, self.compute_gap_us)

    @property
    def gap_position(self) -> int:
        for slot in self.slots:
            if slot.direction is Direction.GAP:
                return slot.position
        raise ScheduleError("schedule has no compute gap")

    def slot_offset_us(self, position: int) -> int:
        """Start of slot `position` relative to cycle start; the gap entry is
        one slot stretched by the compute gap."""
        offset = position * self.slot_duration_us
        if position > self.gap_position:
            offset += self.compute_gap_us
        return offset

    def channel_for(self, cycle_index: int, position: int) -> int:
        slot = self.slots[position]
        if slot.direction is Direction.GAP:
            raise ScheduleError("gap entry has no channel")
        hop = self.hop_feedback if slot.band is Band.FEEDBACK else self.hop_forward
        return hop[(cycle_index + position) % len(hop)]

    def slots_of(self, direction: Direction) -> list[Slot]:
        return [s for s in self.slots if s.direction is direction]


def _check_permutation(hop: tuple[int, ...], name: str) -> None:
    if sorted(hop) != list(range(len(hop))):
        raise ScheduleError(f"{name} hop sequence {hop} is not a permutation of 0..{len(hop) - 1}")


def build_schedule(loops: list[LoopSpec], *, slot_duration_us: int = 250,
                   compute_gap_us: int = 500, retx_slots: int = 2,
                   hop_forward: tuple[int, ...], hop_feedback: tuple[int, ...]) -> CycleSchedule:
    """Build the cycle layout for a set of control loops.

    Slot order: sync flood, one feedback slot per loop (loop-id order), the
    compute gap, one command slot per loop (same order), then the shared
    retransmission flood slots.
    """
    if not loops:
        raise ScheduleError("need at least one control loop")
    if slot_duration_us <= 0 or compute_gap_us < 0 or retx_slots < 0:
        raise ScheduleError("slot duration must be positive and gap/retx non-negative")
    _check_permutation(hop_forward, "forward")
    _check_permutation(hop_feedback, "feedback")

    ids = [loop.loop_id for loop in loops]
    if len(set(ids)) != len(ids):
        raise ScheduleError("duplicate loop ids")
    plants = [loop.plant for loop in loops]
    if len(set(plants)) != len(plants):
        raise ScheduleError("duplicate slot ownership: one plant serves two loops")
    for loop in loops:
        if loop.controller == loop.plant:
            raise ScheduleError(f"loop {loop.loop_id}: controller and plant are the same node")
        overlap = set(loop.relays) & {loop.controller, loop.plant}
        if overlap:
            raise ScheduleError(f"loop {loop.loop_id}: relays {overlap} overlap loop nodes")

    ordered = sorted(loops, key=lambda l: l.loop_id)
    slots: list[Slot] = [Slot(0, Direction.SYNC, Band.FORWARD, None)]
    for loop in ordered:
        slots.append(Slot(len(slots), Direction.UPLINK, Band.FEEDBACK, loop.plant, loop.loop_id))
    slots.append(Slot(len(slots), Direction.GAP, Band.FORWARD, None))
    for loop in ordered:
        slots.append(Slot(len(slots), Direction.DOWNLINK, Band.FORWARD, loop.controller, loop.loop_id))
    for _ in range(retx_slots):
        slots.append(Slot(len(slots), Direction.RETX, Band.FORWARD, None))
    return CycleSchedule(slots=tuple(slots), slot_duration_us=slot_duration_us,
                         compute_gap_us=compute_gap_us, hop_forward=tuple(hop_forward),
                         hop_feedback=tuple(hop_feedback))


@dataclass
class SyncState:
    """Per-node sync bookkeeping; a desynced node only listens until re-synced."""

    node: int
    synced: bool = True
    missed_beacons: int = 0
    last_correction_us: float = 0.0


@dataclass(frozen=True)
class SyncParams:
    jitter_us: float = 10.0   # residual alignment error per flood wave
    max_waves: int = 2        # beacon transmission waves within the sync slot
    miss_limit: int = 3       # consecutive missed beacons before losing sync


@dataclass(frozen=True)
class BeaconReception:
    node: int
    wave: int
    residual_us: float


@dataclass(frozen=True)
class BeaconReport:
    transmissions: list[tuple[int, Transmission]]          # (wave, tx)
    outcomes: list[tuple[int, SimTime, ReceptionOutcome]]  # (wave, time, outcome)
    receptions: list[BeaconReception]
    desynced: list[int]


def run_sync_beacon(engine: Engine, medium: Medium, schedule: CycleSchedule,
                    cycle_index: int, originator: int, nodes: list[int],
                    states: dict[int, SyncState], params: SyncParams,
                    cycle_start: SimTime) -> BeaconReport:
    """Flood one sync beacon through the sync slot and update node clocks.

    The originator transmits in wave 1; every node that first received in wave
    k retransmits in wave k+1, up to max_waves.  A node that receives in wave k
    re-aligns its clock with a residual error that accumulates one uniform
    +/- jitter draw per wave traversed.  Desynced nodes still listen for
    beacons (that is the recovery path); reception resets their miss count.
    """
    channel = schedule.channel_for(cycle_index, 0)
    slot = medium.begin_slot()
    beacon_seq = cycle_index & 0xFFFF
    holders: dict[int, int] = {originator: 0}  # node -> wave it first held the beacon
    transmissions: list[tuple[int, Transmission]] = []
    outcomes: list[tuple[int, SimTime, ReceptionOutcome]] = []
    receptions: list[BeaconReception] = []

    for wave in range(1, params.max_waves + 1):
        senders = sorted(n for n, got in holders.items() if got == wave - 1)
        if not senders:
            break
        at = cycle_start + (wave - 1) * medium.airtime_us
        frame = SyncFrame(src=originator, seq=beacon_seq, cycle_index=cycle_index, wave=wave)
        txs = [medium.make_transmission(s, frame, slot, channel, at) for s in senders]
        transmissions.extend((wave, tx) for tx in txs)
        for node in sorted(nodes):
            if node in holders:
                continue
            outcome = medium.deliver_flood(txs, node)
            outcomes.append((wave, at, outcome))
            if outcome.received:
                holders[node] = wave
                rng = engine.stream(node, "sync")
                residual = float(sum(rng.uniform(-params.jitter_us, params.jitter_us)
                                     for _ in range(wave)))
                engine.clocks[node].correct(at, residual)
                state = states[node]
                state.synced = True
                state.missed_beacons = 0
                state.last_correction_us = residual
                receptions.append(BeaconReception(node=node, wave=wave, residual_us=residual))

    desynced: list[int] = []
    for node in sorted(nodes):
        if node == originator or node in holders:
            continue
        state = states[node]
        state.missed_beacons += 1
        if state.synced and state.missed_beacons >= params.miss_limit:
            state.synced = False
            desynced.append(node)
    return BeaconReport(transmissions=transmissions, outcomes=outcomes,
                        receptions=receptions, desynced=desynced)


@dataclass(frozen=True)
class DeliveryReport:
    """Outcome of one frame's primary attempt plus shared retransmission floods."""

    delivered: bool
    attempts: int
    delivered_on: int | None  # 0 = primary slot, k = k-th retx slot
    latency_us: int | None    # time from primary slot start to full reception


def transmit_with_retx(medium: Medium, frame: Frame, sender: int, dest: int,
                       channels: list[int], *, relays: tuple[int, ...] = (),
                       slot_spacing_us: int = 250, start: SimTime = 0) -> DeliveryReport:
    """Send `frame` in its owned slot, then flood it in up to R retx slots.

    `channels` lists the hop channel of the primary slot followed by one entry
    per retransmission slot.  Relays that overhear any attempt join later
    floods.  This is the single-frame reliability primitive; the simulator's
    per-cycle executor applies the same rules with the retx slots shared
    across loops.
    """
    if not channels:
        raise ScheduleError("need at least the primary slot channel")
    holders = {sender}
    attempts = 0
    for attempt, channel in enumerate(channels):
        slot = medium.begin_slot()
        at = start + attempt * slot_spacing_us
        txs = [medium.make_transmission(s, frame, slot, channel, at) for s in sorted(holders)]
        attempts += 1
        outcome = (medium.deliver(txs[0], dest) if len(txs) == 1
                   else medium.deliver_flood(txs, dest))
        for relay in sorted(set(relays) - holders):
            relay_outcome = (medium.deliver(txs[0], relay) if len(txs) == 1
                             else medium.deliver_flood(txs, relay))
            if relay_outcome.received:
                holders.add(relay)
        if outcome.received:
            return DeliveryReport(delivered=True, attempts=attempts, delivered_on=attempt,
                                  latency_us=attempt * slot_spacing_us + medium.airtime_us)
    return DeliveryReport(delivered=False, attempts=attempts, delivered_on=None, latency_us=None)
