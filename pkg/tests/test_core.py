import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mergesim.core import (detect_collision, find_neighbors, step_kinematics,
                           wrap_respawn)
from mergesim.drivers import equilibrium_gap
from mergesim.scene import (DriverParams, LaneGeometry, PhysicalState,
                            SceneState)

from conftest import make_scene, random_scene


class TestStepKinematics:
    def test_zero_acceleration(self):
        p = step_kinematics(PhysicalState(0.0, 5.0, 0.0), 0.5)
        assert p.s == 2.5
        assert p.v == 5.0

    def test_constant_acceleration(self):
        p = step_kinematics(PhysicalState(0.0, 5.0, 1.0), 0.5)
        assert p.s == 2.625
        assert p.v == 5.5

    def test_braking_to_rest_stops_at_analytic_point(self):
        # stop time 0.025 s, travel v*t - |a| t^2 / 2 = 0.00125 m
        p = step_kinematics(PhysicalState(0.0, 0.1, -4.0), 0.5)
        assert p.v == 0.0
        assert p.s == pytest.approx(0.00125, abs=1e-15)

    def test_rejects_non_positive_dt(self):
        with pytest.raises(ValueError):
            step_kinematics(PhysicalState(0.0, 5.0, 0.0), 0.0)

    @given(s=st.floats(-200, 200), v=st.floats(0, 20),
           a=st.floats(-4, 2), dt=st.floats(0.01, 2.0))
    @settings(max_examples=300)
    def test_matches_closed_form_when_not_stopping(self, s, v, a, dt):
        if v + a * dt < 0:
            return
        p = step_kinematics(PhysicalState(s, v, a), dt)
        expected_s = s + v * dt + 0.5 * a * dt * dt
        expected_v = v + a * dt
        assert p.s == pytest.approx(expected_s, rel=1e-12, abs=1e-12)
        assert p.v == pytest.approx(expected_v, rel=1e-12, abs=1e-12)

    @given(s=st.floats(-200, 200), v=st.floats(0, 20),
           a=st.floats(-4, 2), dt=st.floats(0.01, 2.0))
    @settings(max_examples=300)
    def test_never_reverses(self, s, v, a, dt):
        p = step_kinematics(PhysicalState(s, v, a), dt)
        assert p.v >= 0.0
        assert p.s >= s


class TestDetectCollision:
    def test_overlap_in_conflict_zone(self):
        scene = make_scene([(1, 8.0, 5.0)], ego=(5.0, 5.0))
        report = detect_collision(scene)
        assert report.ego_collision
        assert report.ego_partner_ids == (1,)

    def test_outside_conflict_zone_never_collides(self):
        # same longitudinal overlap, but the ego is still on the ramp
        scene = make_scene([(1, -27.0, 5.0)], ego=(-30.0, 5.0))
        assert not detect_collision(scene).ego_collision

    def test_disjoint_bodies(self):
        scene = make_scene([(1, -2.0, 5.0), (2, 10.0, 5.0)], ego=(5.0, 5.0))
        report = detect_collision(scene)
        assert not report.ego_collision
        assert report.traffic_overlap_pairs == ()

    def test_touching_bumpers_is_not_a_collision(self):
        scene = make_scene([(1, 9.0, 5.0)], ego=(5.0, 5.0))
        assert not detect_collision(scene).ego_collision

    def test_main_lane_overlap_reported(self):
        scene = make_scene([(1, 0.0, 5.0), (2, 3.0, 5.0)], ego=(-40.0, 5.0))
        report = detect_collision(scene)
        assert not report.ego_collision
        assert report.traffic_overlap_pairs == ((1, 2),)


class TestWrapRespawn:
    def test_car_past_end_moves_to_lane_start(self, geom):
        scene = make_scene([(1, geom.lane_end + 1.0, 6.0)], ego=(-40.0, 5.0))
        out = wrap_respawn(scene, geom)
        veh = out.vehicle(1)
        assert veh.s == pytest.approx(geom.lane_start + veh.length)
        assert veh.v == 6.0

    def test_without_wrap_scene_unchanged(self, geom):
        scene = make_scene([(1, 0.0, 5.0), (2, 20.0, 5.0)], ego=(-40.0, 5.0))
        assert wrap_respawn(scene, geom) is scene

    def test_two_cars_wrap_preserving_order(self, geom):
        scene = make_scene([(1, -60.0, 5.0), (2, geom.lane_end + 1.0, 5.0),
                            (3, geom.lane_end + 4.0, 5.0)], ego=(-40.0, 5.0))
        out = wrap_respawn(scene, geom)
        ids = [v.id for v in out.traffic]
        # car 3 was ahead of car 2 and stays ahead after the wrap
        assert ids == [2, 3, 1]
        ss = [v.s for v in out.traffic]
        assert ss == sorted(ss)
        for rear, front in zip(out.traffic, out.traffic[1:]):
            assert front.s - front.length > rear.s

    def test_respawn_keeps_equilibrium_gap_when_start_crowded(self, geom):
        rear_s = geom.lane_start + 5.0
        scene = make_scene([(1, rear_s, 5.0), (2, geom.lane_end + 2.0, 5.0)],
                           ego=(-40.0, 5.0))
        out = wrap_respawn(scene, geom)
        wrapped = out.vehicle(2)
        gap = (rear_s - 4.0) - wrapped.s
        assert gap >= equilibrium_gap(wrapped.v, wrapped.driver) - 1e-12


class TestFindNeighbors:
    def test_single_car_ahead_of_projection(self, geom):
        scene = make_scene([(1, 10.0, 5.0)], ego=(-5.0, 5.0))
        n = find_neighbors(scene, geom)
        assert n.front_of_projection == 1
        assert n.front_on_path == 1  # past the merge point: on the ego path
        assert n.rear_of_projection is None
        assert n.behind_merge_point is None

    def test_empty_lane_all_absent(self, geom):
        scene = make_scene([], ego=(-5.0, 5.0))
        assert find_neighbors(scene, geom) == (None, None, None, None)

    def test_dense_scene_slot_mapping(self, geom):
        scene = make_scene([(1, -10.0, 5.0), (2, -3.0, 5.0), (3, 2.0, 5.0),
                            (4, 9.0, 5.0)], ego=(-5.0, 5.0))
        n = find_neighbors(scene, geom)
        assert n.rear_of_projection == 1
        assert n.front_of_projection == 2
        assert n.behind_merge_point == 2   # largest s <= 0
        assert n.front_on_path == 3        # nearest car past the merge point

    def test_out_of_range_car_excluded(self, geom):
        scene = make_scene([(1, 25.0, 5.0)], ego=(-45.0, 5.0))
        n = find_neighbors(scene, geom)
        assert n == (None, None, None, None)

    def test_agrees_with_brute_force_oracle(self, geom):
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            scene = random_scene(rng)
            got = find_neighbors(scene, geom)
            assert got == _brute_force_neighbors(scene, geom)


def _brute_force_neighbors(scene, geom):
    """Independent nearest-by-s search over all candidate subsets."""
    ego_s = scene.ego.s
    in_range = [v for v in scene.traffic
                if abs(v.s - ego_s) <= geom.sensor_range]

    def nearest(cands, key):
        return min(cands, key=key).id if cands else None

    path_floor = max(ego_s, 0.0)
    front_path = nearest([v for v in in_range if v.s >= path_floor],
                         lambda v: v.s - ego_s)
    behind_merge = nearest([v for v in in_range if v.s <= 0.0],
                           lambda v: -v.s)
    rear = nearest([v for v in in_range if v.s < ego_s],
                   lambda v: ego_s - v.s)
    front = nearest([v for v in in_range if v.s >= ego_s],
                    lambda v: v.s - ego_s)
    return (front_path, behind_merge, rear, front)


class TestSceneValidation:
    def test_traffic_must_be_sorted(self):
        with pytest.raises(ValueError):
            SceneState(None, (make_scene([(1, 5.0, 5.0)]).traffic
                              + make_scene([(2, 0.0, 5.0)]).traffic))

    def test_geometry_invariants(self):
        with pytest.raises(ValueError):
            LaneGeometry(main_lane_length=100.0, merge_point_s=80.0,
                         goal_offset=50.0)
        with pytest.raises(ValueError):
            DriverParams(cooperation=1.5)
        with pytest.raises(ValueError):
            PhysicalState(0.0, -1.0)
