import math

import numpy as np
import pytest

from mergesim.belief import (CooperationBelief, belief_observation,
                             posterior, predict_vehicle, update_belief)
from mergesim.env import DT, EgoAction, ObsMode, env_step_packed
from mergesim.scene import PackedScene
from mergesim.scenarios import dense_config, sample_initial_packed

from conftest import make_scene


class TestPosterior:
    def test_equal_likelihoods_leave_theta_unchanged(self):
        for theta in (0.1, 0.5, 0.73):
            assert posterior(theta, -3.2, -3.2) == theta

    def test_likelihood_ratio_e(self):
        # theta 0.5 with L1/L0 = e gives e / (e + 1)
        expected = math.e / (math.e + 1.0)
        assert posterior(0.5, 1.0, 0.0) == pytest.approx(expected, abs=1e-9)
        assert posterior(0.5, -4.0, -5.0) == pytest.approx(expected, abs=1e-9)

    def test_endpoints_absorbing(self):
        assert posterior(1.0, -100.0, 0.0) == 1.0
        assert posterior(0.0, 0.0, -100.0) == 0.0

    def test_complement_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            theta = rng.uniform(0, 1)
            l1, l0 = rng.normal(size=2)
            swapped = posterior(1.0 - theta, l0, l1)
            assert posterior(theta, l1, l0) == pytest.approx(1.0 - swapped,
                                                             abs=1e-12)

    def test_stays_in_unit_interval(self):
        rng = np.random.default_rng(1)
        theta = 0.5
        for _ in range(1000):
            theta = posterior(theta, rng.normal() * 50, rng.normal() * 50)
            assert 0.0 <= theta <= 1.0


class TestPredictVehicle:
    def test_far_vehicle_identical_under_both_hypotheses(self, geom):
        scene = make_scene([(1, -90.0, 5.0, 0.5)], ego=(-20.0, 5.0))
        assert predict_vehicle(scene, 1, 0, geom=geom) == \
            predict_vehicle(scene, 1, 1, geom=geom)

    def test_cooperative_hypothesis_decelerates(self, geom):
        # gate active: ego arrives first, subject right behind projection
        scene = make_scene([(1, -40.0, 5.0, 0.5)], ego=(-20.0, 5.0))
        s0, v0 = predict_vehicle(scene, 1, 0, geom=geom)
        s1, v1 = predict_vehicle(scene, 1, 1, geom=geom)
        assert v1 < v0
        assert s1 < s0

    def test_zero_dt_is_identity(self, geom):
        scene = make_scene([(1, -40.0, 5.0, 0.5)], ego=(-20.0, 5.0))
        assert predict_vehicle(scene, 1, 1, dt=0, geom=geom) == (-40.0, 5.0)

    def test_unknown_id(self, geom):
        scene = make_scene([(1, -40.0, 5.0)], ego=(-20.0, 5.0))
        with pytest.raises(KeyError):
            predict_vehicle(scene, 99, 1, geom=geom)


def run_filter_episode(cooperation, seed, geom, n_steps=26):
    """One tracked driver watching a merge-like ego maneuver.

    The ego crosses slightly faster than the driver, brakes briefly, then
    cruises just ahead of the driver's projection; both hypotheses then
    predict visibly different motion for several steps.  Returns the final
    theta and the number of steps on which the update actually moved it.
    """
    rng = np.random.default_rng(seed)
    car_s = float(rng.uniform(-58.0, -45.0))
    car_v = float(rng.uniform(4.5, 5.5))
    gap = float(rng.uniform(6.0, 9.0))
    dv0 = float(rng.uniform(0.3, 0.8))
    scene = make_scene([(1, car_s, car_v, cooperation, 6.0)],
                       ego=(car_s + gap, car_v + dv0))
    ps = PackedScene.from_scene(scene)
    belief = CooperationBelief()
    active = 0
    for t in range(n_steps):
        act = EgoAction.DELTA_DOWN_HALF if t < 2 else EgoAction.RELEASE
        nxt, status, _ = env_step_packed(ps, act, geom)
        new_belief = update_belief(belief, ps.to_scene(), nxt.to_scene(), geom)
        if new_belief.get(1) != belief.get(1):
            active += 1
        belief = new_belief
        ps = nxt
        if status.terminal:
            break
    return belief.get(1), active


class TestUpdateBelief:
    def test_converges_to_one_for_cooperative_driver(self, geom):
        finals = []
        for seed in range(30):
            theta, active = run_filter_episode(1.0, seed, geom)
            if active >= 5:
                finals.append(theta)
        assert len(finals) >= 15
        assert np.median(finals) > 0.9

    def test_converges_to_zero_for_blind_driver(self, geom):
        finals = []
        for seed in range(30):
            theta, active = run_filter_episode(0.0, seed, geom)
            if active >= 5:
                finals.append(theta)
        assert len(finals) >= 5
        assert np.median(finals) < 0.1

    def test_theta_constant_while_gate_inactive(self, geom):
        # ego far beyond sensor range of the merge point: nobody reacts
        scene = make_scene([(1, -30.0, 5.0, 1.0), (2, -20.0, 4.5, 0.0)],
                           ego=(-62.0, 0.0))
        ps = PackedScene.from_scene(scene)
        belief = CooperationBelief(theta={1: 0.37, 2: 0.61})
        for _ in range(10):
            nxt, _, _ = env_step_packed(ps, EgoAction.HARD_BRAKE, geom)
            belief = update_belief(belief, ps.to_scene(), nxt.to_scene(), geom)
            assert belief.get(1) == 0.37
            assert belief.get(2) == 0.61
            ps = nxt

    def test_new_vehicle_gets_prior(self, geom):
        a = make_scene([(1, -40.0, 5.0)], ego=(-20.0, 5.0))
        b = make_scene([(1, -38.0, 5.0), (2, 10.0, 5.0)], ego=(-18.0, 5.0),
                       time=DT, step_index=1)
        belief = update_belief(CooperationBelief(), a, b, geom)
        assert belief.get(2) == 0.5

    def test_respawned_vehicle_resets_to_prior(self, geom):
        a = make_scene([(1, 49.0, 6.0)], ego=(-20.0, 5.0))
        b = make_scene([(1, -96.0, 6.0)], ego=(-18.0, 5.0), time=DT,
                       step_index=1)
        belief = CooperationBelief(theta={1: 0.97})
        belief = update_belief(belief, a, b, geom)
        assert belief.get(1) == 0.5


class TestBeliefObservation:
    def test_fresh_episode_shows_priors(self, geom):
        scene = make_scene([(1, -30.0, 5.0), (2, -10.0, 5.0)],
                           ego=(-20.0, 5.0))
        obs = belief_observation(scene, CooperationBelief(), geom)
        assert obs.shape == (15,)
        assert list(obs[11:]) == [0.5] * 4

    def test_slots_carry_tracked_theta(self, geom):
        scene = make_scene([(1, -30.0, 5.0), (2, -10.0, 5.0)],
                           ego=(-20.0, 5.0))
        belief = CooperationBelief(theta={1: 0.93, 2: 0.12})
        obs = belief_observation(scene, belief, geom)
        # slots: front-path absent, behind-merge=2, rear=1, front-proj=2
        assert obs[11] == 0.5
        assert obs[12] == 0.12
        assert obs[13] == 0.93
        assert obs[14] == 0.12

    def test_base_entries_match_plain_observation(self, geom):
        from mergesim.env import build_observation
        scene = make_scene([(1, -30.0, 5.0)], ego=(-20.0, 5.0))
        obs = belief_observation(scene, CooperationBelief(), geom)
        base = build_observation(scene, geom, ObsMode.BASE)
        assert np.array_equal(obs[:11], base)

    def test_filter_episode_ends_confident(self, geom):
        rng = np.random.default_rng(3)
        ps = sample_initial_packed(dense_config(cooperation_range=(1.0, 1.0)),
                                   rng, geom)
        belief = CooperationBelief()
        for _ in range(20):
            nxt, status, _ = env_step_packed(ps, EgoAction.RELEASE, geom)
            belief = update_belief(belief, ps.to_scene(), nxt.to_scene(), geom)
            ps = nxt
            if status.terminal:
                break
        assert all(0.0 <= t <= 1.0 for t in belief.theta.values())
