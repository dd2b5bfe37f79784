"""Longitudinal driver models for main-lane traffic.

Standard IDM car following, plus the cooperative variant in which a driver
with cooperation level ``c`` treats the merging vehicle's main-lane
projection as its leader whenever the merger would reach the merge point
in less than ``c`` times the driver's own arrival time.  ``c = 0`` ignores
the merger entirely until it has physically crossed the merge point;
``c = 1`` yields whenever the merger arrives first.
"""

from __future__ import annotations

import math

from . import _kernels as K
from .core import A_HARD, EPS_V
from .scene import DriverParams, LaneGeometry, PackedScene, SceneState, VehicleState


def idm_accel(v: float, gap: float, closing_speed: float, p: DriverParams,
              a_hard: float = A_HARD) -> float:
    """IDM acceleration against a leader at ``gap`` meters.

    Pass ``gap = math.inf`` for a free road.  A non-positive gap means the
    bodies already overlap and yields the emergency value ``-a_hard``.
    """
    return K.idm_accel_k(v, gap, closing_speed, p.desired_speed, p.min_gap,
                         p.time_headway, p.max_accel, p.comfort_decel,
                         p.accel_exponent, a_hard)


def free_road_accel(v: float, p: DriverParams, a_hard: float = A_HARD) -> float:
    return idm_accel(v, math.inf, 0.0, p, a_hard)


def time_to_merge(distance_to_merge: float, v: float,
                  eps_v: float = EPS_V) -> float:
    """Constant-velocity arrival time at the merge point.

    Zero once past the merge point; infinite for a (nearly) stopped
    vehicle, which consequently never triggers anyone's yield gate.
    """
    return K.ttm_k(distance_to_merge, v, eps_v)


def traffic_accelerations(scene: SceneState, geom: LaneGeometry,
                          a_hard: float = A_HARD,
                          eps_v: float = EPS_V) -> dict[int, float]:
    """Simultaneous cooperative-IDM accelerations, keyed by vehicle id.

    All vehicles read the same frozen scene, so the result is independent
    of traffic order.
    """
    ps = PackedScene.from_scene(scene)
    ego = ps.ego_or_zeros()
    acc = K.traffic_accels_k(ps.tr, ps.has_ego, ego[K.EGO_S], ego[K.EGO_V],
                             ego[K.EGO_LEN], geom.sensor_range, eps_v, a_hard)
    return {int(ps.ids[i]): float(acc[i]) for i in range(ps.n_traffic)}


def cidm_accel(subject: VehicleState, scene: SceneState, geom: LaneGeometry,
               a_hard: float = A_HARD, eps_v: float = EPS_V) -> float:
    """Cooperative-IDM acceleration of one main-lane vehicle.

    Only the nearest vehicle behind the ego projection evaluates the yield
    gate; everyone else (and everyone once the ego has crossed the merge
    point, when it simply joins the main-lane ordering) follows standard
    IDM against its real leader.
    """
    accs = traffic_accelerations(scene, geom, a_hard, eps_v)
    try:
        return accs[subject.id]
    except KeyError:
        raise ValueError(f"vehicle {subject.id} is not in the scene") from None


def equilibrium_gap(v: float, p: DriverParams) -> float:
    """Gap at which IDM following is in equilibrium at speed ``v``."""
    return K.eq_gap_k(v, p.desired_speed, p.min_gap, p.time_headway,
                      p.accel_exponent)


def default_driver(cooperation: float = 0.0,
                   desired_speed: float = 5.0) -> DriverParams:
    return DriverParams(cooperation=cooperation, desired_speed=desired_speed)


__all__ = [
    "idm_accel", "free_road_accel", "time_to_merge", "cidm_accel",
    "traffic_accelerations", "equilibrium_gap", "default_driver",
    "DriverParams", "A_HARD", "EPS_V",
]
