"""Run metrics: closed-loop latency, delivery ratios, tracking error, estop timing.

Closed-loop latency is sampling-to-actuation: for every command a robot
applies, the time since the feedback sample that informed it (joined through
the informing-feedback sequence number logged at emit time).  The raw schedule
cycle length is reported alongside.

Cross-track error is the distance from each ground-truth pose to the nearest
point of the reference polyline (the robot's start position prepended to its
reference points).  In a platoon the follower is measured against the leader's
traced path, thinned to segments of at least 2 mm.
"""

from __future__ import annotations

import math

import numpy as np

# trace column indices (see trace.COLUMNS)
_TIME, _CYCLE, _SLOT, _NODE, _KIND, _FRAME, _SRC, _DST, _SEQ, _CAUSE = range(10)
_V1, _V2, _V3, _V4, _V5 = range(10, 15)


def polyline_distances(points, polyline) -> np.ndarray:
    """Distance from each point to the nearest location on a polyline."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    poly = np.asarray(polyline, dtype=float).reshape(-1, 2)
    if len(poly) == 0:
        raise ValueError("empty polyline")
    best = np.hypot(pts[:, 0] - poly[0, 0], pts[:, 1] - poly[0, 1])
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            d = np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
        else:
            t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
            d = np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])
        best = np.minimum(best, d)
    return best


def thin_polyline(points, min_spacing_m: float = 0.002) -> list[tuple[float, float]]:
    """Drop points closer than min_spacing to the previous kept point."""
    kept: list[tuple[float, float]] = []
    for x, y in points:
        if not kept or math.hypot(x - kept[-1][0], y - kept[-1][1]) >= min_spacing_m:
            kept.append((x, y))
    if not kept and len(points):
        kept.append(tuple(points[0]))
    return kept


def cdf_pairs(values) -> list[tuple[float, float]]:
    """Sorted (value, cumulative fraction) pairs over the samples."""
    if len(values) == 0:
        return []
    arr = np.sort(np.asarray(values, dtype=float))
    uniq, counts = np.unique(arr, return_counts=True)
    fractions = np.cumsum(counts) / len(arr)
    return [(float(v), float(f)) for v, f in zip(uniq, fractions)]


class TraceView:
    """Single-pass extraction of everything the metrics need from trace rows."""

    def __init__(self, rows):
        self.meta: dict[str, float] = {}
        self.latencies: list[tuple[int, int, int]] = []  # (apply time, robot, latency us)
        self.poses: dict[int, list[tuple[int, float, float, float, float, float]]] = {}
        self.refpoints: dict[int, list[tuple[float, float]]] = {}
        self.attempted: dict[str, set] = {"CMD": set(), "FB": set()}
        self.delivered: dict[str, set] = {"CMD": set(), "FB": set()}
        self.controller_latch_us: int | None = None
        self.plant_latch_us: dict[int, int] = {}
        self.waypoint_complete_us: dict[int, int] = {}
        self.follower_pops: list[tuple[int, int, int]] = []  # (time, node, popped)
        self.end_reason: str | None = None
        self.end_time_us: int | None = None
        self.cycles: int | None = None
        self.desync_windows: list[tuple[int, int]] = []

        fb_time: dict[tuple[int, int], int] = {}
        emit_informing: dict[tuple[int, int], int] = {}
        for row in rows:
            kind = row[_KIND]
            if kind == "pose":
                t = int(row[_TIME])
                node = int(row[_NODE])
                self.poses.setdefault(node, []).append(
                    (t, float(row[_V1]), float(row[_V2]), float(row[_V3]),
                     float(row[_V4]), float(row[_V5])))
            elif kind == "rx":
                if row[_CAUSE] == "delivered" and row[_FRAME] in ("CMD", "FB"):
                    if row[_NODE] == row[_DST]:
                        self.delivered[row[_FRAME]].add((row[_SRC], row[_DST], row[_SEQ]))
            elif kind == "tx":
                if row[_FRAME] in ("CMD", "FB"):
                    self.attempted[row[_FRAME]].add((row[_SRC], row[_DST], row[_SEQ]))
            elif kind == "fb-sample":
                fb_time[(int(row[_NODE]), int(row[_SEQ]))] = int(row[_TIME])
            elif kind == "cmd-emit":
                emit_informing[(int(row[_DST]), int(row[_SEQ]))] = int(row[_V3])
            elif kind == "cmd-apply":
                # radio applications only: local (co-located) loops have no slot
                if row[_CAUSE] in ("applied", "estop") and row[_SLOT] != "":
                    robot = int(row[_NODE])
                    informing = emit_informing.get((robot, int(row[_SEQ])))
                    if informing is not None and informing >= 0:
                        t_fb = fb_time.get((robot, informing))
                        if t_fb is not None:
                            t_apply = int(row[_TIME])
                            self.latencies.append((t_apply, robot, t_apply - t_fb))
            elif kind == "ref-point":
                self.refpoints.setdefault(int(row[_NODE]), []).append(
                    (float(row[_V1]), float(row[_V2])))
            elif kind == "estop":
                t = int(row[_TIME])
                if row[_CAUSE] == "controller-latch":
                    if self.controller_latch_us is None:
                        self.controller_latch_us = t
                elif row[_CAUSE] == "plant-latch":
                    self.plant_latch_us.setdefault(int(row[_NODE]), t)
            elif kind == "waypoint":
                node = int(row[_NODE])
                popped = int(row[_V1] or 0)
                if popped:
                    self.follower_pops.append((int(row[_TIME]), node, popped))
                if row[_CAUSE] == "complete":
                    self.waypoint_complete_us.setdefault(node, int(row[_TIME]))
            elif kind == "meta":
                self.meta = {"cycle_length_us": int(row[_V1]),
                             "airtime_us": int(row[_V2]),
                             "n_slots": int(row[_V3]),
                             "seed": int(row[_V4])}
            elif kind == "end":
                self.end_reason = row[_CAUSE]
                self.end_time_us = int(row[_TIME])
                self.cycles = int(row[_V1])

    # -- derived series ------------------------------------------------------

    def pose_xy(self, node: int) -> np.ndarray:
        return np.array([(x, y) for _, x, y, _, _, _ in self.poses.get(node, [])],
                        dtype=float).reshape(-1, 2)

    def reference_polyline(self, node: int) -> list[tuple[float, float]] | None:
        refs = self.refpoints.get(node)
        if not refs:
            return None
        series = self.poses.get(node)
        head = [(series[0][1], series[0][2])] if series else []
        return head + refs

    def stationary_time_us(self, node: int, after_us: int) -> int | None:
        for t, _x, _y, _th, vl, vr in self.poses.get(node, []):
            if t >= after_us and abs(vl) < 1e-9 and abs(vr) < 1e-9:
                return t
        return None

    def gap_series(self, leader: int, follower: int) -> list[tuple[int, float]]:
        lead = {t: (x, y) for t, x, y, _, _, _ in self.poses.get(leader, [])}
        out = []
        for t, x, y, _, _, _ in self.poses.get(follower, []):
            pos = lead.get(t)
            if pos is not None:
                out.append((t, math.hypot(pos[0] - x, pos[1] - y)))
        return out

    def convergence_time_us(self, follower: int, min_pops: int = 3) -> int | None:
        total = 0
        for t, node, popped in self.follower_pops:
            if node == follower:
                total += popped
                if total >= min_pops:
                    return t
        return None


def _latency_stats(latencies: list[int]) -> dict:
    if not latencies:
        return {"count": 0, "min_us": None, "mean_us": None, "p99_us": None,
                "max_us": None, "cdf": [], "counts": []}
    arr = np.asarray(latencies, dtype=float)
    uniq, counts = np.unique(arr, return_counts=True)
    return {
        "count": int(arr.size),
        "min_us": float(arr.min()),
        "mean_us": float(arr.mean()),
        "p99_us": float(np.percentile(arr, 99)),
        "max_us": float(arr.max()),
        "cdf": cdf_pairs(arr),
        "counts": [(float(v), int(c)) for v, c in zip(uniq, counts)],
    }


def _ratio(view: TraceView, frame: str) -> dict:
    attempted = len(view.attempted[frame])
    delivered = len(view.delivered[frame] & view.attempted[frame])
    return {"attempted": attempted, "delivered": delivered,
            "ratio": delivered / attempted if attempted else None}


def compute_metrics(result) -> dict:
    """Build the metrics report for a finished run (a SimulationResult)."""
    view = TraceView(result.trace.rows)
    config = result.config
    report: dict = {
        "config_digest": config.digest(),
        "kind": config.kind,
        "seed": config.seed,
        "end": {"reason": result.end_reason, "time_us": result.end_time_us,
                "cycles": result.cycles},
        "schedule": {
            "cycle_length_us": result.schedule.cycle_length_us,
            "n_slots": len(result.schedule.slots),
            "slot_duration_us": result.schedule.slot_duration_us,
            "compute_gap_us": result.schedule.compute_gap_us,
        },
        "cycle_time": _latency_stats([lat for _, _, lat in view.latencies]),
        "delivery": {"cmd": _ratio(view, "CMD"), "fb": _ratio(view, "FB")},
        "tracking": {},
        "waypoints": {},
    }

    for node in sorted(view.poses):
        polyline = view.reference_polyline(node)
        if polyline is None:
            continue
        xy = view.pose_xy(node)
        if xy.size == 0:
            continue
        d = polyline_distances(xy, polyline)
        report["tracking"][str(node)] = {
            "rms_m": float(np.sqrt(np.mean(d * d))),
            "max_m": float(d.max()),
            "samples": int(d.size),
        }
    for node, t in sorted(view.waypoint_complete_us.items()):
        report["waypoints"][str(node)] = {"completion_time_us": t}

    if config.kind == "leader-follower":
        leader = config.by_role("leader")[0].node_id
        follower = config.by_role("follower")[0].node_id
        gaps = view.gap_series(leader, follower)
        converged = view.convergence_time_us(follower)
        platoon: dict = {"converged_at_us": converged}
        if gaps:
            platoon["gap_min_m"] = float(min(g for _, g in gaps))
            platoon["gap_mean_m"] = float(np.mean([g for _, g in gaps]))
        if converged is not None:
            post = [g for t, g in gaps if t >= converged]
            if post:
                platoon["gap_min_post_convergence_m"] = float(min(post))
            leader_path = thin_polyline([(x, y) for _, x, y, _, _, _
                                         in view.poses.get(leader, [])])
            follower_xy = np.array([(x, y) for t, x, y, _, _, _
                                    in view.poses.get(follower, []) if t >= converged],
                                   dtype=float).reshape(-1, 2)
            if len(leader_path) >= 2 and follower_xy.size:
                d = polyline_distances(follower_xy, leader_path)
                platoon["follower_rms_vs_leader_m"] = float(np.sqrt(np.mean(d * d)))
                platoon["follower_max_vs_leader_m"] = float(d.max())
        report["platoon"] = platoon

    if view.controller_latch_us is not None:
        estop: dict = {"latch_time_us": view.controller_latch_us, "per_robot": {}}
        for node in sorted(view.poses):
            stationary = view.stationary_time_us(node, view.controller_latch_us)
            estop["per_robot"][str(node)] = {
                "stationary_time_us": stationary,
                "latency_us": (None if stationary is None
                               else stationary - view.controller_latch_us),
            }
        report["estop"] = estop
    return report
