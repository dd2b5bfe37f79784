"""The episodic merging environment.

The ego picks one of seven discrete commands each 0.5 s step: nudge its
commanded acceleration by -1/-0.5/0/+0.5/+1 m/s^2 (accumulated and clamped
to [-4, +2]), hard-brake (acceleration set to -4) or release (set to 0).
Every main-lane vehicle then applies its cooperative-IDM acceleration
computed on the frozen pre-step scene, all vehicles move simultaneously,
wrapped vehicles respawn, and the episode terminates on an ego collision
(reward -1), on reaching the goal past the merge point (+1), or when 50
simulated seconds elapse (time-out, reward 0).

Observation layout (merge-point coordinates, ego first):

====  =========================================  ==========
idx   entry                                      normalizer
====  =========================================  ==========
0-2   ego s, v, commanded a                      60 / 10 / 4
3-10  per neighbor slot: (s - ego s), v          60 / 10
11-14 cooperation (or belief) per slot           none
====  =========================================  ==========

Empty neighbor slots are padded with a virtual car at the sensor boundary
(ahead or behind, per slot) moving at the ego speed, cooperation 0.5.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import A_HARD, EPS_V
from .scene import LaneGeometry, PackedScene, SceneState, VehicleState

DT = 0.5
TIMEOUT_S = 50.0
A_CMD_MIN = -4.0
A_CMD_MAX = 2.0

N_ACTIONS = 7
ACTION_DELTAS = (-1.0, -0.5, 0.0, 0.5, 1.0)

OBS_WIDTH_BASE = 11
OBS_WIDTH_FULL = 15

# Per-entry normalization scales (s, v, a); cooperation entries stay raw.
NORM_S = 60.0
NORM_V = 10.0
NORM_A = 4.0


class EgoAction(enum.IntEnum):
    DELTA_DOWN_1 = 0
    DELTA_DOWN_HALF = 1
    DELTA_ZERO = 2
    DELTA_UP_HALF = 3
    DELTA_UP_1 = 4
    HARD_BRAKE = 5
    RELEASE = 6


class ObsMode(enum.Enum):
    BASE = "base"          # width 11: positions and velocities only
    FULL_OBS = "fullobs"   # width 15: true cooperation levels appended
    BELIEF = "belief"      # width 15: belief entries appended (see belief.py)


class StepStatus(enum.Enum):
    RUNNING = "running"
    COLLISION = "collision"
    GOAL_REACHED = "goal_reached"
    TIMED_OUT = "timed_out"

    @property
    def terminal(self) -> bool:
        return self is not StepStatus.RUNNING


def apply_action(ego: VehicleState, act: EgoAction,
                 a_min: float = A_CMD_MIN, a_max: float = A_CMD_MAX) -> float:
    """New commanded ego acceleration after one action."""
    return _apply_action_value(ego.a, act, a_min, a_max)


def _apply_action_value(a: float, act: EgoAction, a_min: float = A_CMD_MIN,
                        a_max: float = A_CMD_MAX) -> float:
    act = EgoAction(act)
    if act is EgoAction.HARD_BRAKE:
        return a_min
    if act is EgoAction.RELEASE:
        return 0.0
    return min(a_max, max(a_min, a + ACTION_DELTAS[act]))


def reward(prev: SceneState, next_scene: SceneState,
           status: StepStatus) -> float:
    """Sparse outcome reward; waiting is only penalized via discounting."""
    if status is StepStatus.COLLISION:
        return -1.0
    if status is StepStatus.GOAL_REACHED:
        return 1.0
    return 0.0


def obs_width(mode: ObsMode) -> int:
    return OBS_WIDTH_BASE if mode is ObsMode.BASE else OBS_WIDTH_FULL


def build_observation_packed(ps: PackedScene, geom: LaneGeometry,
                             mode: ObsMode) -> np.ndarray:
    """Raw (un-normalized) observation vector for a packed scene."""
    if not ps.has_ego:
        raise ValueError("observation requires an ego vehicle")
    ego = ps.ego
    ego_s = ego[K.EGO_S]
    ego_v = ego[K.EGO_V]
    slots = K.neighbors_k(ps.tr, ego_s, geom.sensor_range)
    full = mode is not ObsMode.BASE
    out = np.empty(OBS_WIDTH_FULL if full else OBS_WIDTH_BASE)
    out[0] = ego_s
    out[1] = ego_v
    out[2] = ego[K.EGO_A]
    # Empty-slot padding direction: the two "front" slots sit at the sensor
    # boundary ahead, the rear and behind-merge-point slots behind.
    ahead = (True, False, False, True)
    for j, idx in enumerate(slots):
        if idx >= 0:
            out[3 + 2 * j] = ps.tr[idx, K.S] - ego_s
            out[4 + 2 * j] = ps.tr[idx, K.V]
            if full:
                out[11 + j] = ps.tr[idx, K.C]
        else:
            out[3 + 2 * j] = geom.sensor_range if ahead[j] else -geom.sensor_range
            out[4 + 2 * j] = ego_v
            if full:
                out[11 + j] = 0.5
    return out


def build_observation(scene: SceneState, geom: LaneGeometry,
                      mode: ObsMode = ObsMode.BASE) -> np.ndarray:
    return build_observation_packed(PackedScene.from_scene(scene), geom, mode)


def normalize_observation(values: np.ndarray,
                          scales: tuple[float, float, float] = (NORM_S, NORM_V, NORM_A)
                          ) -> np.ndarray:
    """Scale an observation to roughly [-1, 1] for the value network.

    ``scales`` holds the (position, velocity, acceleration) divisors.
    Cooperation/belief entries (indices 11+) are already in [0, 1] and
    pass through unchanged.
    """
    norm_s, norm_v, norm_a = scales
    out = values.astype(np.float64).copy()
    if out.ndim == 1:
        out = out[None, :]
        squeeze = True
    else:
        squeeze = False
    out[:, 0] /= norm_s
    out[:, 1] /= norm_v
    out[:, 2] /= norm_a
    out[:, 3:11:2] /= norm_s
    out[:, 4:11:2] /= norm_v
    return out[0] if squeeze else out


@dataclass(frozen=True)
class StepOutcome:
    next_scene: SceneState
    observation: np.ndarray
    reward: float
    status: StepStatus


def timeout_steps(dt: float = DT, timeout_s: float = TIMEOUT_S) -> int:
    return int(round(timeout_s / dt))


def _status_from_code(code: int, step_index: int,
                      n_timeout: int) -> StepStatus:
    if code == K.STATUS_COLLISION:
        return StepStatus.COLLISION
    if code == K.STATUS_GOAL:
        return StepStatus.GOAL_REACHED
    if step_index >= n_timeout:
        return StepStatus.TIMED_OUT
    return StepStatus.RUNNING


def env_step_packed(ps: PackedScene, act: EgoAction, geom: LaneGeometry,
                    dt: float = DT, a_hard: float = A_HARD,
                    eps_v: float = EPS_V,
                    n_timeout: Optional[int] = None
                    ) -> tuple[PackedScene, StepStatus, float]:
    """One environment step on the packed representation.

    Returns ``(next_packed, status, reward)``; observation construction is
    left to the caller because the required mode differs per policy.
    """
    if not ps.has_ego:
        raise ValueError("env_step requires an ego vehicle")
    if n_timeout is None:
        n_timeout = timeout_steps(dt)
    ego_a = _apply_action_value(ps.ego[K.EGO_A], act)
    tr, ids, ego, code = K.advance_k(ps.tr, ps.ids, True, ps.ego, ego_a, dt,
                                     geom.lane_start, geom.lane_end,
                                     geom.goal_s, geom.sensor_range, eps_v,
                                     a_hard)
    nxt = PackedScene(tr, ids, ego, ps.time + dt, ps.step_index + 1)
    status = _status_from_code(code, nxt.step_index, n_timeout)
    rew = -1.0 if status is StepStatus.COLLISION else (
        1.0 if status is StepStatus.GOAL_REACHED else 0.0)
    return nxt, status, rew


def env_step(scene: SceneState, act: EgoAction, geom: LaneGeometry,
             dt: float = DT, mode: ObsMode = ObsMode.BASE) -> StepOutcome:
    """One full environment step, deterministic given (scene, action).

    Order: freeze the scene; compute all traffic accelerations; apply the
    ego action; step every vehicle; respawn wrapped vehicles; evaluate
    collision > goal > time-out; emit the observation and reward.
    """
    if scene_status(scene, geom).terminal:
        raise ValueError("cannot step a terminal scene")
    ps = PackedScene.from_scene(scene)
    nxt, status, rew = env_step_packed(ps, act, geom, dt)
    obs = build_observation_packed(nxt, geom, mode)
    return StepOutcome(nxt.to_scene(), obs, rew, status)


def scene_status(scene: SceneState, geom: LaneGeometry, dt: float = DT,
                 timeout_s: float = TIMEOUT_S) -> StepStatus:
    """Status of a scene as env_step would classify it."""
    ps = PackedScene.from_scene(scene)
    code = K.STATUS_RUNNING
    if ps.has_ego:
        if K.ego_collision_k(ps.tr, ps.ego[K.EGO_S], ps.ego[K.EGO_LEN]) >= 0:
            code = K.STATUS_COLLISION
        elif ps.ego[K.EGO_S] >= geom.goal_s:
            code = K.STATUS_GOAL
    return _status_from_code(code, ps.step_index, timeout_steps(dt, timeout_s))
