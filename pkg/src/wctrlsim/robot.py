"""Ground-truth differential-drive robot.

Pose integration uses the exact circular-arc solution of the unicycle
kinematics (straight-line limit below |omega| < 1e-9 rad/s), so one step over
dt equals any composition of sub-steps.  Wheel speeds slew toward the
commanded values under an acceleration limit, magnetic encoders accumulate
ticks with a carried rounding remainder, and an infrared-style distance sensor
casts a single forward ray against line-segment obstacles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .frames import CmdFrame


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float  # radians, normalized to (-pi, pi]


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def step_kinematics(pose: Pose, v_left: float, v_right: float, dt: float,
                    track_width_m: float) -> Pose:
    """Advance a pose by constant wheel speeds (m/s) over dt seconds.

    v = (v_left + v_right) / 2, omega = (v_right - v_left) / track; the arc
    solution is exact for constant inputs.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = 0.5 * (v_left + v_right)
    omega = (v_right - v_left) / track_width_m
    theta = pose.theta
    if abs(omega) < 1e-9:
        return Pose(pose.x + v * dt * math.cos(theta),
                    pose.y + v * dt * math.sin(theta),
                    normalize_angle(theta))
    radius = v / omega
    theta2 = theta + omega * dt
    return Pose(pose.x + radius * (math.sin(theta2) - math.sin(theta)),
                pose.y - radius * (math.cos(theta2) - math.cos(theta)),
                normalize_angle(theta2))


def advance_by_wheel_arcs(pose: Pose, ds_left_m: float, ds_right_m: float,
                          track_width_m: float) -> Pose:
    """Advance a pose by per-wheel arc lengths: the same exact-arc formula with
    v*dt := mean arc and omega*dt := arc difference / track."""
    if ds_left_m == 0.0 and ds_right_m == 0.0:
        return pose
    return step_kinematics(pose, ds_left_m, ds_right_m, 1.0, track_width_m)


@dataclass(frozen=True)
class RobotParams:
    """Physical constants; plausible small-robot defaults, all configurable."""

    wheel_radius_m: float = 0.0325
    track_width_m: float = 0.117
    ticks_per_rev: int = 360
    max_wheel_speed_mms: int = 300
    actuation_rate_limit_mms2: float = 500.0

    def validate(self) -> None:
        if (self.wheel_radius_m <= 0 or self.track_width_m <= 0
                or self.ticks_per_rev <= 0 or self.max_wheel_speed_mms <= 0
                or self.actuation_rate_limit_mms2 <= 0):
            raise ValueError("robot parameters must all be strictly positive")

    @property
    def ticks_per_meter(self) -> float:
        return self.ticks_per_rev / (2.0 * math.pi * self.wheel_radius_m)


@dataclass(frozen=True)
class Segment:
    x1: float
    y1: float
    x2: float
    y2: float


def ray_distance_m(pose: Pose, obstacles: list[Segment]) -> float | None:
    """Distance along the heading ray to the nearest obstacle segment, or None."""
    ox, oy = pose.x, pose.y
    dx, dy = math.cos(pose.theta), math.sin(pose.theta)
    best: float | None = None
    for seg in obstacles:
        ax, ay = seg.x1, seg.y1
        ex, ey = seg.x2 - ax, seg.y2 - ay
        denom = dx * ey - dy * ex
        if abs(denom) < 1e-12:
            continue  # parallel (or degenerate) segment
        t = ((ax - ox) * ey - (ay - oy) * ex) / denom
        s = ((ax - ox) * dy - (ay - oy) * dx) / denom
        if t >= 0.0 and 0.0 <= s <= 1.0 and (best is None or t < best):
            best = t
    return best


def _seq_is_newer(seq: int, last: int | None) -> bool:
    # wrap-aware u16 comparison: newer iff it is 1..32767 ahead of `last`
    if last is None:
        return True
    return 0 < ((seq - last) & 0xFFFF) < 0x8000


class Robot:
    """One mobile platform: commanded/actual wheel speeds, pose, encoders, sensor."""

    def __init__(self, node: int, params: RobotParams, pose: Pose,
                 sensor_range_mm: int = 1000, watchdog_cycles: int = 10):
        params.validate()
        self.node = node
        self.params = params
        self.pose = pose
        self.sensor_range_mm = sensor_range_mm
        self.watchdog_cycles = watchdog_cycles
        self.commanded = (0.0, 0.0)  # mm/s
        self.actual = (0.0, 0.0)     # mm/s
        self.estop_latched = False
        self.last_cmd_seq: int | None = None
        self.cycles_without_command = 0
        self._arc_m = [0.0, 0.0]     # exact cumulative wheel arc lengths
        self._ticks = [0, 0]         # emitted cumulative encoder ticks

    @property
    def ticks(self) -> tuple[int, int]:
        return self._ticks[0], self._ticks[1]

    @property
    def stationary(self) -> bool:
        return self.actual == (0.0, 0.0)

    def apply_command(self, cmd: CmdFrame) -> str:
        """Apply a decoded command addressed to this robot.

        Returns the disposition: "applied", "estop", "stale" or "latched".
        An emergency-stop command always latches, even if its sequence number
        is stale; once latched, only the latch state is maintained.
        """
        if cmd.estop:
            self.latch_estop()
            if _seq_is_newer(cmd.seq, self.last_cmd_seq):
                self.last_cmd_seq = cmd.seq
            self.cycles_without_command = 0
            return "estop"
        if self.estop_latched:
            return "latched"
        if not _seq_is_newer(cmd.seq, self.last_cmd_seq):
            return "stale"
        self.last_cmd_seq = cmd.seq
        limit = float(self.params.max_wheel_speed_mms)
        self.commanded = (max(-limit, min(limit, float(cmd.left_mms))),
                          max(-limit, min(limit, float(cmd.right_mms))))
        self.cycles_without_command = 0
        return "applied"

    def latch_estop(self) -> None:
        self.estop_latched = True
        self.commanded = (0.0, 0.0)

    def end_cycle(self, dt_s: float, command_seen: bool) -> None:
        """Close out one MAC cycle: watchdog, slew, pose and encoder advance."""
        if not command_seen:
            self.cycles_without_command += 1
            if self.cycles_without_command >= self.watchdog_cycles:
                self.commanded = (0.0, 0.0)  # local safety stop, not latched
        self.tick(dt_s)

    def tick(self, dt_s: float) -> None:
        """Slew actual wheel speeds toward commanded and integrate motion over dt."""
        if dt_s <= 0:
            raise ValueError(f"dt must be positive, got {dt_s}")
        step = self.params.actuation_rate_limit_mms2 * dt_s
        limit = float(self.params.max_wheel_speed_mms)
        actual = []
        for current, target in zip(self.actual, self.commanded):
            delta = target - current
            if delta > step:
                delta = step
            elif delta < -step:
                delta = -step
            actual.append(max(-limit, min(limit, current + delta)))
        self.actual = (actual[0], actual[1])

        v_left = self.actual[0] * 1e-3
        v_right = self.actual[1] * 1e-3
        self.pose = step_kinematics(self.pose, v_left, v_right, dt_s,
                                    self.params.track_width_m)
        ticks_per_m = self.params.ticks_per_meter
        for i, v in enumerate((v_left, v_right)):
            self._arc_m[i] += v * dt_s
            # round the exact cumulative count so the remainder carries over steps
            self._ticks[i] = int(round(self._arc_m[i] * ticks_per_m))

    def read_distance_mm(self, obstacles: list[Segment]) -> int | None:
        """Forward-ray distance in mm, saturated at the sensor range; None beyond it."""
        d = ray_distance_m(self.pose, obstacles)
        if d is None:
            return None
        mm = int(round(d * 1000.0))
        return mm if mm <= self.sensor_range_mm else None

    def sample_feedback(self, obstacles: list[Segment]) -> tuple[int, int, int | None]:
        """Encoder ticks (i32-wrapped) and distance reading for a feedback frame."""
        from .frames import wrap_i32

        return (wrap_i32(self._ticks[0]), wrap_i32(self._ticks[1]),
                self.read_distance_mm(obstacles))
