import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivesim import roadway as rd
from drivesim.util import wrap_angle


def test_wrap_angle_range():
    for a in [-10.0, -np.pi, 0.0, np.pi, 10.0, 123.4]:
        w = wrap_angle(a)
        assert -np.pi < w <= np.pi
        assert np.isclose(np.sin(w), np.sin(a)) and np.isclose(np.cos(w), np.cos(a))


def test_straight_centerline_arclength():
    cl = rd.Centerline([[0.0, 0.0], [3.0, 4.0]])
    assert np.isclose(cl.length, 5.0)


def test_circle_curvature_oracle():
    # radius 50 m discretized at 1 m: curvature 1/50 = 0.02 within 1e-3
    cl = rd.arc_centerline(50.0, np.pi, spacing=1.0)
    interior = cl.curvature[2:-2]
    assert np.all(np.abs(interior - 0.02) < 1e-3)


def test_centered_marker_distances():
    road = rd.straight_roadway(3, 100.0, 3.7)
    proj = rd.project_to_frenet(road, (50.0, 0.0), 0.0)
    left, right = rd.marker_distances(road, proj)
    assert np.isclose(left, 1.85) and np.isclose(right, 1.85)


def test_marker_distances_sum_to_lane_width():
    road = rd.straight_roadway(2, 100.0, 3.7)
    for y in [-1.0, 0.4, 1.2]:
        proj = rd.project_to_frenet(road, (10.0, y), 0.0)
        left, right = rd.marker_distances(road, proj)
        assert np.isclose(left + right, 3.7)


def test_left_offset_positive():
    road = rd.straight_roadway(1, 100.0)
    proj = rd.project_to_frenet(road, (50.0, 1.0), 0.0)
    assert proj.t > 0  # left of travel direction
    proj = rd.project_to_frenet(road, (50.0, -1.0), 0.0)
    assert proj.t < 0


def test_lane_assignment_and_tie_break():
    road = rd.straight_roadway(3, 100.0, 3.7)
    assert rd.project_to_frenet(road, (10.0, 0.5), 0.0).lane_index == 0
    assert rd.project_to_frenet(road, (10.0, 3.7), 0.0).lane_index == 1
    # midway between lanes 0 and 1: tie breaks to the lower index
    assert rd.project_to_frenet(road, (10.0, 3.7 / 2), 0.0).lane_index == 0


def test_projection_beyond_ends_extends():
    road = rd.straight_roadway(1, 100.0)
    proj = rd.project_to_frenet(road, (110.0, 0.5), 0.0)
    assert proj.s > 100.0 and np.isclose(proj.t, 0.5)
    proj = rd.project_to_frenet(road, (-5.0, 0.0), 0.0)
    assert proj.s < 0.0


def test_lane_relative_heading():
    road = rd.straight_roadway(1, 100.0)
    proj = rd.project_to_frenet(road, (50.0, 0.0), 0.3)
    assert np.isclose(proj.phi, 0.3)


def test_distance_beyond_outer():
    road = rd.straight_roadway(2, 100.0, 3.7)
    # inside the corridor
    proj = rd.project_to_frenet(road, (50.0, 2.0), 0.0)
    assert rd.distance_beyond_outer(road, proj) <= 0.0
    # 3 m left of the left lane's centerline -> 3 - 1.85 beyond the marker
    proj = rd.project_to_frenet(road, (50.0, 3.7 + 3.0), 0.0)
    assert np.isclose(rd.distance_beyond_outer(road, proj), 3.0 - 1.85)
    # far right of lane 0
    proj = rd.project_to_frenet(road, (50.0, -3.0), 0.0)
    assert np.isclose(rd.distance_beyond_outer(road, proj), 3.0 - 1.85)


def test_empty_roadway_raises():
    with pytest.raises(rd.EmptyRoadway):
        rd.project_to_frenet(rd.Roadway(lanes=[]), (0.0, 0.0), 0.0)


def test_curvature_out_of_range():
    cl = rd.Centerline([[0.0, 0.0], [10.0, 0.0]])
    with pytest.raises(rd.OutOfRange):
        rd.curvature_at(cl, 11.0)
    with pytest.raises(rd.OutOfRange):
        rd.curvature_at(cl, -1.0)


@settings(deadline=None, max_examples=50)
@given(s=st.floats(1.0, 99.0), t=st.floats(-1.8, 1.8),
       lane=st.integers(0, 2))
def test_frenet_round_trip(s, t, lane):
    road = rd.straight_roadway(3, 100.0, 3.7)
    x, y = rd.frenet_to_cartesian(road, lane, s, t)
    proj = rd.project_to_frenet(road, (x, y), 0.0)
    assert proj.lane_index == lane
    assert np.isclose(proj.s, s, atol=1e-9)
    assert np.isclose(proj.t, t, atol=1e-9)


def test_load_centerlines_roundtrip(tmp_path):
    road = rd.straight_roadway(2, 50.0)
    p = tmp_path / "cl.csv"
    with open(p, "w") as f:
        f.write("lane,x,y\n")
        for i, lane in enumerate(road.lanes):
            for x, y in lane.xy:
                f.write(f"{i},{x},{y}\n")
    loaded = rd.load_centerlines(p)
    assert loaded.n_lanes == 2
    assert np.isclose(loaded.lanes[0].length, 50.0)


def test_load_centerlines_empty(tmp_path):
    p = tmp_path / "cl.csv"
    p.write_text("lane,x,y\n")
    with pytest.raises(rd.EmptyRoadway):
        rd.load_centerlines(p)
