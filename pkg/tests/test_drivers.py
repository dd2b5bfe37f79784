import math

import numpy as np
import pytest

from mergesim.core import A_HARD
from mergesim.drivers import (cidm_accel, equilibrium_gap, idm_accel,
                              time_to_merge, traffic_accelerations)
from mergesim.scene import DriverParams, LaneGeometry
from mergesim.scenarios import simulate_ego_free

from conftest import car, make_scene, random_scene


DRIVER = DriverParams()  # v0=5, s0=1, T=1, a=2, b=2, delta=4


class TestIdmAccel:
    def test_free_road_at_desired_speed(self):
        assert idm_accel(5.0, math.inf, 0.0, DRIVER) == 0.0

    def test_free_road_from_rest(self):
        assert idm_accel(0.0, math.inf, 0.0, DRIVER) == DRIVER.max_accel

    def test_half_desired_speed_at_static_desired_gap(self):
        # gap equal to s*(v, 0) makes the interaction term exactly one:
        # a = a_max * (1 - 0.5^4 - 1) = -0.125 for a_max = 2
        gap = DRIVER.min_gap + 2.5 * DRIVER.time_headway
        assert idm_accel(2.5, gap, 0.0, DRIVER) == pytest.approx(-0.125,
                                                                 abs=1e-15)

    def test_degenerate_gap_returns_emergency_braking(self):
        assert idm_accel(5.0, 0.0, 0.0, DRIVER) == -A_HARD
        assert idm_accel(5.0, -2.0, 0.0, DRIVER) == -A_HARD

    def test_clamped_to_hard_braking(self):
        assert idm_accel(8.0, 0.5, 8.0, DRIVER) == -A_HARD

    def test_bounded_above_by_max_accel(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            a = idm_accel(rng.uniform(0, 12), rng.uniform(0.1, 80),
                          rng.uniform(-10, 10), DRIVER)
            assert -A_HARD <= a <= DRIVER.max_accel


class TestTimeToMerge:
    def test_simple_ratio(self):
        assert time_to_merge(20.0, 5.0) == 4.0

    def test_stopped_vehicle_never_arrives(self):
        assert time_to_merge(20.0, 0.0) == math.inf
        assert time_to_merge(20.0, 0.1) == math.inf  # at the threshold

    def test_already_past_merge_point(self):
        assert time_to_merge(-1.0, 5.0) == 0.0
        assert time_to_merge(0.0, 0.0) == 0.0


def _standard_leader_accel(subject, scene):
    """Reference IDM against the subject's real main-lane leader."""
    leaders = [v for v in scene.traffic if v.s > subject.s]
    if not leaders:
        return idm_accel(subject.v, math.inf, 0.0, subject.driver)
    lead = min(leaders, key=lambda v: v.s)
    gap = (lead.s - lead.length) - subject.s
    return idm_accel(subject.v, gap, subject.v - lead.v, subject.driver)


class TestCidmGate:
    def test_yield_mode_when_ego_arrives_first(self, geom):
        # TTM_ego = 4, TTM_subject = 10, c = 0.5: 4 < 5 triggers the gate
        scene = make_scene([(1, -50.0, 5.0, 0.5)], ego=(-20.0, 5.0))
        subject = scene.traffic[0]
        got = cidm_accel(subject, scene, geom)
        gap = (-20.0 - 4.0) - (-50.0)
        expected = idm_accel(5.0, gap, 0.0, subject.driver)
        assert got == expected
        assert got != _standard_leader_accel(subject, scene)

    def test_cooperation_zero_ignores_the_merger(self, geom):
        scene = make_scene([(1, -50.0, 5.0, 0.0)], ego=(-20.0, 5.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_no_yield_when_subject_arrives_first(self, geom):
        # TTM_ego = 12 > TTM_subject = 10, even with c = 1
        scene = make_scene([(1, -70.0, 7.0, 1.0)], ego=(-60.0, 5.0))
        subject = scene.traffic[0]
        assert time_to_merge(60.0, 5.0) == 12.0
        assert time_to_merge(70.0, 7.0) == 10.0
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_gate_equality_means_no_yield(self, geom):
        # TTM_ego = 4 = c * TTM_subject exactly: follows standard IDM
        scene = make_scene([(1, -40.0, 5.0, 0.5)], ego=(-20.0, 5.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_only_nearest_behind_projection_yields(self, geom):
        scene = make_scene([(1, -50.0, 5.0, 1.0), (2, -35.0, 5.0, 1.0)],
                           ego=(-20.0, 5.0))
        rear, near = scene.traffic
        accs = traffic_accelerations(scene, geom)
        # the nearest-behind car yields to the projection
        gap = (-20.0 - 4.0) - (-35.0)
        assert accs[2] == idm_accel(5.0, gap, 0.0, near.driver)
        # the farther car follows its real leader as usual
        assert accs[1] == _standard_leader_accel(rear, scene)

    def test_vehicle_ahead_of_projection_never_yields(self, geom):
        scene = make_scene([(1, -10.0, 5.0, 1.0)], ego=(-20.0, 5.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_ego_far_from_merge_point_is_ignored(self, geom):
        # beyond sensor range of the merge point along the ramp
        scene = make_scene([(1, -30.0, 1.0, 1.0)], ego=(-61.0, 5.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_stopped_ego_triggers_no_yield(self, geom):
        scene = make_scene([(1, -50.0, 5.0, 1.0)], ego=(-20.0, 0.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == \
            _standard_leader_accel(subject, scene)

    def test_overlapping_projection_brakes_hard(self, geom):
        # yielding car whose bumper already passed the ego projection's rear
        scene = make_scene([(1, -23.5, 5.0, 1.0)], ego=(-20.0, 5.0, 0.0))
        subject = scene.traffic[0]
        assert cidm_accel(subject, scene, geom) == -A_HARD


class TestCidmProperties:
    def test_c_zero_reduces_to_idm_bit_for_bit(self, geom):
        # the real leader includes the ego once it has physically crossed
        rng = np.random.default_rng(42)
        checked = 0
        for _ in range(300):
            scene = random_scene(rng)
            scene = _with_cooperation(scene, 0.0)
            accs = traffic_accelerations(scene, geom)
            for subject in scene.traffic:
                if scene.ego is not None and scene.ego.s >= 0:
                    expected = _ego_inserted_leader_accel(subject, scene)
                else:
                    expected = _standard_leader_accel(subject, scene)
                assert accs[subject.id] == expected
                checked += 1
        assert checked > 500

    def test_past_merge_ego_joins_main_lane_for_all_c(self, geom):
        rng = np.random.default_rng(43)
        for _ in range(300):
            scene = random_scene(rng)
            if scene.ego.s < 0:
                scene = make_scene(
                    [(v.id, v.s, v.v, v.driver.cooperation,
                      v.driver.desired_speed) for v in scene.traffic],
                    ego=(abs(scene.ego.s) % 45.0, scene.ego.v))
            base = None
            for c in (0.0, 0.3, 1.0):
                accs = traffic_accelerations(_with_cooperation(scene, c), geom)
                if base is None:
                    base = accs
                    for subject in scene.traffic:
                        assert accs[subject.id] == \
                            _ego_inserted_leader_accel(subject, scene)
                else:
                    assert accs == base

    def test_yield_set_is_an_up_set_in_c(self, geom):
        rng = np.random.default_rng(44)
        tested = 0
        for _ in range(200):
            scene = random_scene(rng)
            if scene.ego is None or not scene.traffic:
                continue
            grid = np.linspace(0.0, 1.0, 21)
            for subject in scene.traffic:
                vals = []
                for c in grid:
                    s2 = _with_subject_cooperation(scene, subject.id, c)
                    vals.append(cidm_accel(s2.vehicle(subject.id), s2, geom))
                base = vals[0]  # c = 0 never yields
                flags = [v != base for v in vals]
                if any(flags):
                    first = flags.index(True)
                    assert all(flags[first:]), \
                        f"yield set not an up-set: {flags}"
                    tested += 1
        assert tested > 20

    def test_accelerations_bounded(self, geom):
        rng = np.random.default_rng(45)
        for _ in range(400):
            scene = random_scene(rng)
            for a in traffic_accelerations(scene, geom).values():
                assert -A_HARD <= a <= 2.0

    def test_equilibrium_convergence_behind_slower_leader(self):
        # follower (v0 = 5) behind a leader cruising at its v0 = 4
        big = LaneGeometry(main_lane_length=5000.0, merge_point_s=2500.0)
        scene = make_scene([(1, -30.0, 5.0, 0.0, 5.0), (2, 0.0, 4.0, 0.0, 4.0)])
        out = simulate_ego_free(scene, n_steps=240, geom=big)
        follower = out.vehicle(1)
        assert abs(follower.a) < 1e-3
        assert follower.v == pytest.approx(4.0, abs=0.05)

    def test_equilibrium_gap_matches_zero_accel(self):
        gap = equilibrium_gap(4.0, DRIVER)
        assert idm_accel(4.0, gap, 0.0, DRIVER) == pytest.approx(0.0, abs=1e-12)


def _with_cooperation(scene, c):
    return make_scene([(v.id, v.s, v.v, c, v.driver.desired_speed)
                       for v in scene.traffic],
                      ego=None if scene.ego is None else
                      (scene.ego.s, scene.ego.v, scene.ego.a))


def _with_subject_cooperation(scene, vid, c):
    return make_scene([(v.id, v.s, v.v,
                        c if v.id == vid else v.driver.cooperation,
                        v.driver.desired_speed) for v in scene.traffic],
                      ego=None if scene.ego is None else
                      (scene.ego.s, scene.ego.v, scene.ego.a))


def _ego_inserted_leader_accel(subject, scene):
    """Reference IDM with the crossed ego inserted into the ordering."""
    cands = [(v.s, v.length, v.v) for v in scene.traffic if v.s > subject.s]
    if scene.ego is not None and scene.ego.s > subject.s:
        cands.append((scene.ego.s, scene.ego.length, scene.ego.v))
    if not cands:
        return idm_accel(subject.v, math.inf, 0.0, subject.driver)
    lead_s, lead_len, lead_v = min(cands)
    gap = (lead_s - lead_len) - subject.s
    return idm_accel(subject.v, gap, subject.v - lead_v, subject.driver)
