"""Recursive Bayesian filter over per-driver cooperation.

Cooperation is latent, so the ego tracks, per main-lane driver, the
probability ``theta`` that the driver behaves like a fully cooperative one.
Each step the previous scene is propagated one step under the two
hypotheses (cooperation forced to 0 and to 1, everything else frozen) and
the new observation is scored under a Gaussian around each prediction
(sigma 1 m for position, 1 m/s for velocity, independent).  While a
driver's yield gate is inactive both hypotheses predict identically and
its ``theta`` does not move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import A_HARD, EPS_V
from .env import DT, ObsMode, build_observation_packed
from .scene import LaneGeometry, PackedScene, SceneState

THETA_PRIOR = 0.5
SIGMA_POS = 1.0
SIGMA_VEL = 1.0

# exp() guard for extreme log-likelihood ratios
_MAX_LOG_RATIO = 500.0


@dataclass
class CooperationBelief:
    """Per-driver probability of full cooperation, keyed by vehicle id."""

    theta: dict[int, float] = field(default_factory=dict)
    sigma_pos: float = SIGMA_POS
    sigma_vel: float = SIGMA_VEL
    prior: float = THETA_PRIOR

    def get(self, vehicle_id: int) -> float:
        return self.theta.get(vehicle_id, self.prior)

    def copy(self) -> "CooperationBelief":
        return CooperationBelief(dict(self.theta), self.sigma_pos,
                                 self.sigma_vel, self.prior)


def posterior(theta: float, log_l1: float, log_l0: float) -> float:
    """Binary Bayes update from per-hypothesis log-likelihoods.

    Computed via the likelihood ratio so equal likelihoods leave ``theta``
    exactly unchanged, and 0/1 are absorbing.
    """
    if theta <= 0.0:
        return 0.0
    if theta >= 1.0:
        return 1.0
    log_ratio = min(_MAX_LOG_RATIO, max(-_MAX_LOG_RATIO, log_l0 - log_l1))
    return theta / (theta + (1.0 - theta) * math.exp(log_ratio))


def _predictions(ps: PackedScene, geom: LaneGeometry, dt: float) -> np.ndarray:
    ego = ps.ego_or_zeros()
    return K.predict_hypotheses_k(ps.tr, ps.has_ego, ego[K.EGO_S],
                                  ego[K.EGO_V], ego[K.EGO_LEN],
                                  geom.sensor_range, EPS_V, A_HARD, dt)


def predict_vehicle(scene: SceneState, vehicle_id: int, hypothesis: int,
                    dt: float = DT,
                    geom: LaneGeometry | None = None) -> tuple[float, float]:
    """One-step (s, v) prediction of a vehicle under a forced hypothesis.

    ``hypothesis`` is 0 or 1.  ``dt = 0`` returns the current state.
    """
    if hypothesis not in (0, 1):
        raise ValueError("hypothesis must be 0 or 1")
    geom = geom or LaneGeometry()
    ps = PackedScene.from_scene(scene)
    idx = np.flatnonzero(ps.ids == vehicle_id)
    if idx.size == 0:
        raise KeyError(f"no vehicle with id {vehicle_id}")
    i = int(idx[0])
    if dt == 0:
        return float(ps.tr[i, K.S]), float(ps.tr[i, K.V])
    pred = _predictions(ps, geom, dt)
    col = 2 * hypothesis
    return float(pred[i, col]), float(pred[i, col + 1])


def update_belief_packed(belief: CooperationBelief, prev: PackedScene,
                         curr: PackedScene, geom: LaneGeometry,
                         dt: float = DT) -> CooperationBelief:
    """Filter update from consecutive packed scenes (hot-path form)."""
    pred = _predictions(prev, geom, dt)
    prev_index = {int(prev.ids[i]): i for i in range(prev.n_traffic)}
    inv_p = 0.5 / (belief.sigma_pos * belief.sigma_pos)
    inv_v = 0.5 / (belief.sigma_vel * belief.sigma_vel)
    theta = {}
    for j in range(curr.n_traffic):
        vid = int(curr.ids[j])
        i = prev_index.get(vid)
        if i is None:
            theta[vid] = belief.prior
            continue
        s_obs = curr.tr[j, K.S]
        v_obs = curr.tr[j, K.V]
        if s_obs < prev.tr[i, K.S]:
            # vehicles never move backwards, so this was a wrap-around
            # respawn; belief does not carry across it
            theta[vid] = belief.prior
            continue
        log_l0 = -((s_obs - pred[i, 0]) ** 2 * inv_p
                   + (v_obs - pred[i, 1]) ** 2 * inv_v)
        log_l1 = -((s_obs - pred[i, 2]) ** 2 * inv_p
                   + (v_obs - pred[i, 3]) ** 2 * inv_v)
        theta[vid] = posterior(belief.get(vid), log_l1, log_l0)
    return CooperationBelief(theta, belief.sigma_pos, belief.sigma_vel,
                             belief.prior)


def update_belief(belief: CooperationBelief, scene_t: SceneState,
                  scene_next: SceneState, geom: LaneGeometry | None = None,
                  dt: float = DT) -> CooperationBelief:
    """Bayes update of every tracked driver from two consecutive scenes.

    Newly seen vehicles start at the prior; respawned vehicles are reset
    to it (wrap-around is a simulation artifact, not evidence).
    """
    geom = geom or LaneGeometry()
    return update_belief_packed(belief, PackedScene.from_scene(scene_t),
                                PackedScene.from_scene(scene_next), geom, dt)


def belief_observation_packed(ps: PackedScene, belief: CooperationBelief,
                              geom: LaneGeometry) -> np.ndarray:
    """Width-15 observation: base entries plus theta per neighbor slot."""
    out = build_observation_packed(ps, geom, ObsMode.FULL_OBS)
    slots = K.neighbors_k(ps.tr, ps.ego[K.EGO_S], geom.sensor_range)
    for j, idx in enumerate(slots):
        if idx >= 0:
            out[11 + j] = belief.get(int(ps.ids[idx]))
        else:
            out[11 + j] = belief.prior
    return out


def belief_observation(scene: SceneState, belief: CooperationBelief,
                       geom: LaneGeometry | None = None) -> np.ndarray:
    geom = geom or LaneGeometry()
    return belief_observation_packed(PackedScene.from_scene(scene), belief,
                                     geom)
