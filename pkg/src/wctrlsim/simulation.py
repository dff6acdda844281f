"""Scenario orchestration: one run wiring engine, medium, MAC, plants and controller.

Each cycle executes as a single engine event at its start time:

    sync flood -> per-loop feedback slots -> controller compute (gap) ->
    per-loop command slots -> shared retx flood slots -> plant tick

Every transmission is drawn against every listening node, so any node can
overhear a frame and join later retransmission floods.  The shared retx slots
serve pending frames in a fixed priority order (undelivered commands first,
then undelivered feedback, by loop id); once the controller has latched an
emergency stop they instead carry a broadcast stop frame every cycle.

In a leader-follower scenario the controller is hosted on the leader robot:
the leader's own loop closes locally at compute time (encoders sampled and
commands applied in place), while the follower's loop runs over the radio.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import metrics as metrics_mod
from .channel import Cause, Medium, ReceptionOutcome, Transmission
from .controller import PathController
from .engine import Engine, SimTime
from .frames import CmdFrame, EstopFrame, FbFrame, Frame, msg_type_of
from .mac import (CycleSchedule, Direction, Slot, SyncState, build_schedule,
                  run_sync_beacon)
from .robot import Robot, Segment
from .scenario import ScenarioConfig
from .trace import Trace


@dataclass
class _Pending:
    """A frame that missed its destination, awaiting the shared retx slots."""

    priority: tuple[int, int]  # (0, loop) for commands, (1, loop) for feedback
    frame: Frame
    dest: int
    holders: set[int]


@dataclass
class SimulationResult:
    config: ScenarioConfig
    schedule: CycleSchedule
    trace: Trace
    end_reason: str
    cycles: int
    end_time_us: SimTime
    metrics: dict


class Simulation:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        proto = config.protocol
        self.engine = Engine(config.seed, max_drift_ppm=proto.max_drift_ppm)
        self.medium = Medium(self.engine, proto.n_channels,
                             phy_overhead_bytes=proto.phy_overhead_bytes,
                             phy_rate_mbps=proto.phy_rate_mbps)
        self.all_nodes = sorted(config.node_ids())
        for node in self.all_nodes:
            self.engine.add_node(node)
        self._build_links()

        hop_rng = self.engine.stream(None, "hop-forward")
        hop_forward = tuple(int(c) for c in hop_rng.permutation(proto.n_channels))
        hop_rng = self.engine.stream(None, "hop-feedback")
        hop_feedback = tuple(int(c) for c in hop_rng.permutation(proto.n_channels))
        self.loops = config.loops()
        self.schedule = build_schedule(self.loops,
                                       slot_duration_us=proto.slot_duration_us,
                                       compute_gap_us=proto.compute_gap_us,
                                       retx_slots=proto.retx_slots,
                                       hop_forward=hop_forward,
                                       hop_feedback=hop_feedback)

        self.controller_node = config.controller_node().node_id
        self.robots: dict[int, Robot] = {}
        for spec in config.robots():
            self.robots[spec.node_id] = Robot(spec.node_id, spec.params, spec.start_pose,
                                              sensor_range_mm=config.sensor_range_mm,
                                              watchdog_cycles=proto.watchdog_cycles)
        self.controller = PathController(self.controller_node, config.steering,
                                         config.follower)
        self._build_lanes()
        self.sync_states = {node: SyncState(node=node) for node in self.all_nodes}
        self.trace = Trace()
        self.cycle = 0
        self.end_reason: str | None = None
        self.end_time_us: SimTime = 0
        self._fb_seq: dict[int, int] = {node: 0 for node in self.robots}
        self._estop_seq = 0
        self._cycle_cmds: dict[int, CmdFrame] = {}
        self._pending: list[_Pending] = []
        self._last_holding: dict[int, bool] = {}
        self._last_cmd_zero: dict[int, bool] = {}
        self._commands_seen: set[int] = set()
        self._completed: set[int] = set()
        self._cycle_estop: EstopFrame | None = None
        self._estop_holders: set[int] = set()

    # -- setup ---------------------------------------------------------------

    def _build_links(self) -> None:
        explicit = {(l.sender, l.receiver): l for l in self.config.channel.links}
        for sender in self.all_nodes:
            for receiver in self.all_nodes:
                if sender == receiver:
                    continue
                spec = explicit.get((sender, receiver))
                if spec is None:
                    self.medium.add_link(sender, receiver, per=self.config.channel.default_per)
                else:
                    self.medium.add_link(sender, receiver, per=spec.per,
                                         per_by_channel=spec.per_by_channel,
                                         burst=spec.burst)
        for blackout in self.config.channel.blackouts:
            self.medium.add_blackout(blackout.node, blackout.from_us, blackout.until_us)

    def _build_lanes(self) -> None:
        cfg = self.config
        if cfg.kind == "remote-control":
            for spec in cfg.robots():
                self.controller.add_path_lane(spec.node_id, spec.params, spec.start_pose,
                                              list(spec.path))
        else:
            leader = cfg.by_role("leader")[0]
            follower = cfg.by_role("follower")[0]
            self.controller.add_path_lane(leader.node_id, leader.params, leader.start_pose,
                                          list(leader.path), local=True)
            self.controller.add_follower_lane(follower.node_id, follower.params,
                                              follower.start_pose, leader.node_id)

    # -- helpers -------------------------------------------------------------

    def _active_obstacles(self, at: SimTime) -> list[Segment]:
        return [o.segment for o in self.config.obstacles if o.appears_at_us <= at]

    def _log_frame(self, time_us: SimTime, kind: str, slot: int | None, frame: Frame,
                   cause=None, channel=None, wave=None, node=None) -> None:
        self.trace.add(time_us, kind, cycle=self.cycle, slot=slot, node=node,
                       frame=msg_type_of(frame).name, src=frame.src, dst=frame.dst,
                       seq=frame.seq, cause=cause, v1=channel, v2=wave)

    def _apply_cmd(self, robot_id: int, cmd: CmdFrame, at: SimTime,
                   slot: int | None, local: bool = False) -> None:
        robot = self.robots[robot_id]
        was_latched = robot.estop_latched
        disposition = robot.apply_command(cmd)
        self._commands_seen.add(robot_id)
        self.trace.add(at, "cmd-apply", cycle=self.cycle, slot=slot, node=robot_id,
                       frame="CMD", src=cmd.src, dst=cmd.dst, seq=cmd.seq,
                       cause="local" if local and disposition == "applied" else disposition,
                       v1=cmd.left_mms, v2=cmd.right_mms)
        if robot.estop_latched and not was_latched:
            self.trace.add(at, "estop", cycle=self.cycle, node=robot_id, cause="plant-latch")

    def _latch_estop_plant(self, robot_id: int, at: SimTime) -> None:
        robot = self.robots[robot_id]
        if not robot.estop_latched:
            robot.latch_estop()
            self.trace.add(at, "estop", cycle=self.cycle, node=robot_id, cause="plant-latch")
        self._commands_seen.add(robot_id)

    def _deliver_to_listeners(self, txs: list[Transmission], slot: Slot, at: SimTime,
                              wave: int | None = None) -> dict[int, bool]:
        """Draw one reception outcome per listening node; returns who received."""
        senders = {tx.sender for tx in txs}
        received: dict[int, bool] = {}
        frame = txs[0].frame
        for node in self.all_nodes:
            if node in senders:
                continue
            if not self.sync_states[node].synced:
                outcome = ReceptionOutcome(node, False, Cause.DESYNCED_LISTENER)
            elif len(txs) == 1:
                outcome = self.medium.deliver(txs[0], node)
            else:
                outcome = self.medium.deliver_flood(txs, node)
            self.trace.add(at, "rx", cycle=self.cycle, slot=slot.position, node=node,
                           frame=msg_type_of(frame).name, src=frame.src, dst=frame.dst,
                           seq=frame.seq, cause=outcome.cause.value,
                           v1=txs[0].channel, v2=wave)
            received[node] = outcome.received
        return received

    def _log_empty_slot(self, slot: Slot, at: SimTime) -> None:
        for node in self.all_nodes:
            if node == slot.owner:
                continue
            self.trace.add(at, "rx", cycle=self.cycle, slot=slot.position, node=node,
                           cause=Cause.NO_TRANSMITTER.value)

    # -- per-slot handlers -----------------------------------------------------

    def _run_sync_slot(self, cycle_start: SimTime) -> None:
        report = run_sync_beacon(self.engine, self.medium, self.schedule, self.cycle,
                                 self.controller_node, self.all_nodes, self.sync_states,
                                 self.config.protocol.sync, cycle_start)
        channel = self.schedule.channel_for(self.cycle, 0)
        for wave, tx in report.transmissions:
            self.trace.add(tx.start, "tx", cycle=self.cycle, slot=0, node=tx.sender,
                           frame="SYNC", src=tx.frame.src, dst=tx.frame.dst,
                           seq=tx.frame.seq, v1=channel, v2=wave)
        for wave, at, outcome in report.outcomes:
            self.trace.add(at, "rx", cycle=self.cycle, slot=0, node=outcome.receiver,
                           frame="SYNC", src=self.controller_node, dst=0xFF,
                           seq=self.cycle & 0xFFFF, cause=outcome.cause.value,
                           v1=channel, v2=wave)
        for rec in report.receptions:
            self.trace.add(cycle_start, "sync", cycle=self.cycle, slot=0, node=rec.node,
                           v1=rec.residual_us, v2=rec.wave)
        for node in self.all_nodes:
            if node == self.controller_node:
                continue
            state = self.sync_states[node]
            if state.missed_beacons > 0 and all(r.node != node for r in report.receptions):
                self.trace.add(cycle_start, "sync-miss", cycle=self.cycle, slot=0,
                               node=node, v1=state.missed_beacons)
        for node in report.desynced:
            self.trace.add(cycle_start, "desync", cycle=self.cycle, slot=0, node=node)

    def _run_uplink_slot(self, slot: Slot, at: SimTime) -> None:
        robot_id = slot.owner
        if not self.sync_states[robot_id].synced:
            self._log_empty_slot(slot, at)
            return
        robot = self.robots[robot_id]
        ticks_l, ticks_r, distance = robot.sample_feedback(self._active_obstacles(at))
        seq = self._fb_seq[robot_id] = (self._fb_seq[robot_id] + 1) & 0xFFFF
        self.trace.add(at, "fb-sample", cycle=self.cycle, slot=slot.position,
                       node=robot_id, seq=seq, v1=ticks_l, v2=ticks_r,
                       v3=-1 if distance is None else distance)
        frame = FbFrame(src=robot_id, dst=self.controller_node, seq=seq,
                        left_ticks=ticks_l, right_ticks=ticks_r, distance_mm=distance)
        slot_uid = self.medium.begin_slot()
        channel = self.schedule.channel_for(self.cycle, slot.position)
        tx = self.medium.make_transmission(robot_id, frame, slot_uid, channel, at)
        self._log_frame(at, "tx", slot.position, frame, channel=channel, node=robot_id)
        received = self._deliver_to_listeners([tx], slot, at)
        holders = {robot_id} | {n for n, ok in received.items() if ok}
        if received.get(self.controller_node):
            self.controller.ingest_feedback(frame)
        else:
            self._pending.append(_Pending(priority=(1, slot.loop_id), frame=frame,
                                          dest=self.controller_node, holders=holders))

    def _run_compute(self, at: SimTime) -> None:
        # leader-follower: the co-located leader loop closes here, off the air
        for robot_id, lane in self.controller.lanes.items():
            if lane.local:
                robot = self.robots[robot_id]
                ticks_l, ticks_r, distance = robot.sample_feedback(self._active_obstacles(at))
                seq = self._fb_seq[robot_id] = (self._fb_seq[robot_id] + 1) & 0xFFFF
                self.trace.add(at, "fb-sample", cycle=self.cycle, node=robot_id, seq=seq,
                               cause="local", v1=ticks_l, v2=ticks_r,
                               v3=-1 if distance is None else distance)
                self.controller.ingest_feedback(
                    FbFrame(src=robot_id, dst=self.controller_node, seq=seq,
                            left_ticks=ticks_l, right_ticks=ticks_r, distance_mm=distance))

        decisions = self.controller.run_cycle()
        if decisions.estop_triggered:
            self.trace.add(at, "estop", cycle=self.cycle, node=self.controller_node,
                           cause="controller-latch", v1=decisions.estop_source)
        self._cycle_cmds.clear()
        robot_to_loop = {loop.plant: loop.loop_id for loop in self.loops}
        for decision in decisions.commands:
            lane = self.controller.lanes[decision.robot]
            self._last_holding[decision.robot] = decision.holding
            self._last_cmd_zero[decision.robot] = (decision.cmd.left_mms == 0
                                                   and decision.cmd.right_mms == 0)
            newly_complete = decision.complete and decision.robot not in self._completed
            if newly_complete:
                self._completed.add(decision.robot)
            if decision.advanced or newly_complete:
                self.trace.add(at, "waypoint", cycle=self.cycle, node=decision.robot,
                               cause="complete" if newly_complete else None,
                               v1=decision.advanced)
            self.trace.add(at, "cmd-emit", cycle=self.cycle, node=self.controller_node,
                           frame="CMD", src=decision.cmd.src, dst=decision.cmd.dst,
                           seq=decision.cmd.seq,
                           cause="estop" if decision.cmd.estop else None,
                           v1=decision.cmd.left_mms, v2=decision.cmd.right_mms,
                           v3=decision.informing_fb_seq)
            if lane.local:
                self._apply_cmd(decision.robot, decision.cmd, at, None, local=True)
            else:
                self._cycle_cmds[robot_to_loop[decision.robot]] = decision.cmd

    def _run_downlink_slot(self, slot: Slot, at: SimTime) -> None:
        cmd = self._cycle_cmds.get(slot.loop_id)
        if cmd is None:
            self._log_empty_slot(slot, at)
            return
        slot_uid = self.medium.begin_slot()
        channel = self.schedule.channel_for(self.cycle, slot.position)
        tx = self.medium.make_transmission(self.controller_node, cmd, slot_uid, channel, at)
        self._log_frame(at, "tx", slot.position, cmd, channel=channel,
                        node=self.controller_node)
        received = self._deliver_to_listeners([tx], slot, at)
        holders = {self.controller_node} | {n for n, ok in received.items() if ok}
        if received.get(cmd.dst):
            self._apply_cmd(cmd.dst, cmd, at + self.medium.airtime_us, slot.position)
        else:
            self._pending.append(_Pending(priority=(0, slot.loop_id), frame=cmd,
                                          dest=cmd.dst, holders=holders))

    def _ensure_estop_frame(self) -> None:
        if self._cycle_estop is None:
            self._estop_seq = (self._estop_seq + 1) & 0xFFFF
            self._cycle_estop = EstopFrame(src=self.controller_node, seq=self._estop_seq)
            self._estop_holders = {self.controller_node}

    def _run_retx_slot(self, slot: Slot, at: SimTime) -> None:
        if self.controller.estop_latched:
            self._ensure_estop_frame()
            self._flood_estop(slot, at)
            return
        self._pending.sort(key=lambda p: p.priority)
        entry = self._pending[0] if self._pending else None
        if entry is None:
            self._log_empty_slot(slot, at)
            return
        senders = sorted(n for n in entry.holders if self.sync_states[n].synced)
        if not senders:
            self._log_empty_slot(slot, at)
            return
        slot_uid = self.medium.begin_slot()
        channel = self.schedule.channel_for(self.cycle, slot.position)
        txs = [self.medium.make_transmission(s, entry.frame, slot_uid, channel, at)
               for s in senders]
        for tx in txs:
            self._log_frame(at, "tx", slot.position, entry.frame, channel=channel,
                            node=tx.sender)
        received = self._deliver_to_listeners(txs, slot, at)
        entry.holders |= {n for n, ok in received.items() if ok}
        if received.get(entry.dest):
            self._pending.remove(entry)
            if isinstance(entry.frame, CmdFrame):
                self._apply_cmd(entry.dest, entry.frame, at + self.medium.airtime_us,
                                slot.position)
            elif isinstance(entry.frame, FbFrame):
                self.controller.ingest_feedback(entry.frame)

    def _flood_estop(self, slot: Slot, at: SimTime) -> None:
        frame = self._cycle_estop
        slot_uid = self.medium.begin_slot()
        channel = self.schedule.channel_for(self.cycle, slot.position)
        senders = sorted(n for n in self._estop_holders if self.sync_states[n].synced)
        txs = [self.medium.make_transmission(s, frame, slot_uid, channel, at)
               for s in senders]
        for tx in txs:
            self._log_frame(at, "tx", slot.position, frame, channel=channel, node=tx.sender)
        received = self._deliver_to_listeners(txs, slot, at)
        for node, ok in received.items():
            if ok:
                self._estop_holders.add(node)
                if node in self.robots:
                    self._latch_estop_plant(node, at + self.medium.airtime_us)

    # -- the cycle event -------------------------------------------------------

    def _run_cycle(self) -> None:
        cycle_start = self.engine.now
        cycle_len = self.schedule.cycle_length_us
        if cycle_start + cycle_len > self.config.max_time_us:
            self._finish("timeout", cycle_start)
            return
        self._commands_seen = set()
        self._pending = []
        self._cycle_estop = None
        self._estop_holders = set()

        for slot in self.schedule.slots:
            at = cycle_start + self.schedule.slot_offset_us(slot.position)
            if slot.direction is Direction.SYNC:
                self._run_sync_slot(cycle_start)
            elif slot.direction is Direction.UPLINK:
                self._run_uplink_slot(slot, at)
            elif slot.direction is Direction.GAP:
                self._run_compute(at)
            elif slot.direction is Direction.DOWNLINK:
                self._run_downlink_slot(slot, at)
            elif slot.direction is Direction.RETX:
                self._run_retx_slot(slot, at)

        cycle_end = cycle_start + cycle_len
        cycle_s = cycle_len * 1e-6
        for robot_id in sorted(self.robots):
            robot = self.robots[robot_id]
            robot.end_cycle(cycle_s, robot_id in self._commands_seen)
            self.trace.add(cycle_end, "pose", cycle=self.cycle, node=robot_id,
                           v1=robot.pose.x, v2=robot.pose.y, v3=robot.pose.theta,
                           v4=robot.actual[0], v5=robot.actual[1])

        reason = self._completion_reason()
        if reason is not None:
            self._finish(reason, cycle_end)
            return
        self.cycle += 1
        self.engine.schedule(cycle_end, self._run_cycle)

    def _completion_reason(self) -> str | None:
        if self.controller.estop_latched:
            if all(robot.stationary for robot in self.robots.values()):
                return "estopped"
            return None
        if not self.config.run_to_completion:
            return None
        for lane in self.controller.lanes.values():
            if lane.cursor is not None and not lane.complete:
                return None
            if lane.follower_of is not None:
                settled = (self._last_holding.get(lane.robot, False)
                           or self._last_cmd_zero.get(lane.robot, False))
                if not settled:
                    return None
        return "completed"

    def _finish(self, reason: str, at: SimTime) -> None:
        self.end_reason = reason
        self.end_time_us = at
        self.trace.add(at, "end", cycle=self.cycle, cause=reason, v1=self.cycle)

    # -- entry point -----------------------------------------------------------

    def run(self) -> SimulationResult:
        self.trace.add(0, "meta", v1=self.schedule.cycle_length_us,
                       v2=self.medium.airtime_us, v3=len(self.schedule.slots),
                       v4=self.config.seed)
        for spec in self.config.robots():
            if spec.path:
                for idx, (x, y) in enumerate(spec.path):
                    self.trace.add(0, "ref-point", node=spec.node_id, seq=idx, v1=x, v2=y)
        self.engine.schedule(0, self._run_cycle)
        self.engine.run_until(self.config.max_time_us)
        if self.end_reason is None:
            self._finish("timeout", self.config.max_time_us)
        result = SimulationResult(config=self.config, schedule=self.schedule,
                                  trace=self.trace, end_reason=self.end_reason,
                                  cycles=self.cycle, end_time_us=self.end_time_us,
                                  metrics={})
        result.metrics = metrics_mod.compute_metrics(result)
        return result


def run_scenario(config: ScenarioConfig) -> SimulationResult:
    """Validate, build and execute one scenario to its completion condition."""
    return Simulation(config).run()


def run_sweep(raw_config: dict, grid: dict) -> list[dict]:
    """One run per grid point; returns one aggregated metrics row per run.

    `grid` holds "parameters" (dotted config path -> list of values) and
    optionally "seeds" (list of seeds, overriding the config seed).  Runs are
    independent: each builds its own engine and shares no state.
    """
    from itertools import product

    from .scenario import apply_overrides, config_from_dict

    parameters: dict = grid.get("parameters", {})
    seeds = grid.get("seeds", None)
    names = sorted(parameters)
    value_lists = [parameters[name] for name in names]
    combos = list(product(*value_lists)) if names else [()]
    seed_list = seeds if seeds else [raw_config.get("seed", 0)]

    rows = []
    for combo in combos:
        overrides = dict(zip(names, combo))
        for seed in seed_list:
            patched = apply_overrides(raw_config, {**overrides, "seed": seed})
            result = run_scenario(config_from_dict(patched))
            m = result.metrics
            row: dict = {**{name: value for name, value in overrides.items()},
                         "seed": seed,
                         "end_reason": result.end_reason,
                         "cycles": result.cycles,
                         "cmd_delivery_ratio": m["delivery"]["cmd"]["ratio"],
                         "fb_delivery_ratio": m["delivery"]["fb"]["ratio"],
                         "latency_mean_us": m["cycle_time"]["mean_us"],
                         "latency_p99_us": m["cycle_time"]["p99_us"]}
            tracking = m.get("tracking") or {}
            if tracking:
                row["worst_rms_m"] = max(v["rms_m"] for v in tracking.values())
            rows.append(row)
    return rows
