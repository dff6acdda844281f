import math

import numpy as np
import pytest

from oracles import brute_point_to_polyline
from wctrlsim.metrics import TraceView, cdf_pairs, polyline_distances, thin_polyline
from wctrlsim.trace import Trace


def test_points_on_polyline_have_zero_distance():
    poly = [(0, 0), (1, 0), (1, 1)]
    pts = [(0.5, 0.0), (1.0, 0.5), (1.0, 1.0)]
    assert polyline_distances(pts, poly).max() == pytest.approx(0.0)


def test_constant_lateral_offset_gives_that_rms():
    poly = [(0, 0), (2, 0)]
    pts = [(x, 0.05) for x in np.linspace(0.1, 1.9, 50)]
    d = polyline_distances(pts, poly)
    assert np.sqrt(np.mean(d * d)) == pytest.approx(0.05)


def test_polyline_distance_matches_brute_force():
    rng = np.random.default_rng(8)
    poly = [(0, 0), (0.7, 0.1), (0.9, 0.8), (0.2, 1.0)]
    pts = rng.uniform(-0.5, 1.5, size=(20, 2))
    fast = polyline_distances(pts, poly)
    for (px, py), expected in zip(pts, fast):
        brute = brute_point_to_polyline(px, py, poly)
        assert expected == pytest.approx(brute, abs=1e-3)


def test_single_point_polyline():
    d = polyline_distances([(1.0, 1.0)], [(0.0, 0.0)])
    assert d[0] == pytest.approx(math.sqrt(2))


def test_cdf_pairs_sorted_and_bounded():
    pairs = cdf_pairs([3, 1, 2, 2, 5])
    values = [v for v, _ in pairs]
    fracs = [f for _, f in pairs]
    assert values == sorted(values)
    assert fracs == sorted(fracs)
    assert fracs[-1] == pytest.approx(1.0)
    assert all(0 < f <= 1 for f in fracs)
    assert pairs[1] == (2.0, pytest.approx(0.6))


def test_cdf_of_empty_is_empty():
    assert cdf_pairs([]) == []


def test_thin_polyline_spacing():
    points = [(0, 0), (0.0005, 0), (0.001, 0), (0.01, 0), (0.02, 0)]
    kept = thin_polyline(points, min_spacing_m=0.002)
    assert kept[0] == (0, 0)
    assert all(math.hypot(b[0] - a[0], b[1] - a[1]) >= 0.002
               for a, b in zip(kept, kept[1:]))


def synthetic_trace():
    trace = Trace()
    trace.add(0, "meta", v1=2000, v2=104, v3=6, v4=1)
    trace.add(0, "ref-point", node=1, seq=0, v1=0.5, v2=0.0)
    # cycle 0: feedback sampled at 250, command applied at 1354
    trace.add(250, "fb-sample", cycle=0, slot=1, node=1, seq=1, v1=0, v2=0, v3=-1)
    trace.add(500, "cmd-emit", cycle=0, node=0, frame="CMD", src=0, dst=1, seq=1,
              v1=100, v2=100, v3=1)
    trace.add(1354, "cmd-apply", cycle=0, slot=3, node=1, frame="CMD", src=0, dst=1,
              seq=1, cause="applied", v1=100, v2=100)
    trace.add(2000, "pose", cycle=0, node=1, v1=0.0, v2=0.05, v3=0.0, v4=100.0, v5=100.0)
    return trace


def test_latency_join_through_informing_sequence():
    view = TraceView(synthetic_trace().rows)
    assert view.latencies == [(1354, 1, 1104)]


def test_latency_ignores_uninformed_commands():
    trace = synthetic_trace()
    trace.add(2500, "cmd-emit", cycle=1, node=0, frame="CMD", src=0, dst=1, seq=2,
              v1=0, v2=0, v3=-1)
    trace.add(3354, "cmd-apply", cycle=1, slot=3, node=1, frame="CMD", src=0, dst=1,
              seq=2, cause="applied", v1=0, v2=0)
    view = TraceView(trace.rows)
    assert len(view.latencies) == 1


def test_empty_trace_is_not_an_error():
    view = TraceView([])
    assert view.latencies == []
    assert cdf_pairs([lat for *_, lat in view.latencies]) == []


def test_reference_polyline_prepends_first_pose():
    view = TraceView(synthetic_trace().rows)
    assert view.reference_polyline(1) == [(0.0, 0.05), (0.5, 0.0)]


def test_stationary_time_scan():
    trace = synthetic_trace()
    trace.add(4000, "pose", cycle=1, node=1, v1=0.0, v2=0.0, v3=0.0, v4=50.0, v5=50.0)
    trace.add(6000, "pose", cycle=2, node=1, v1=0.0, v2=0.0, v3=0.0, v4=0.0, v5=0.0)
    view = TraceView(trace.rows)
    assert view.stationary_time_us(1, after_us=0) == 6000
    assert view.stationary_time_us(1, after_us=6001) is None
