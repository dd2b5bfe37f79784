"""Kinematics, collision detection, respawn and neighbor queries.

These are thin validated wrappers over the compiled kernels; the array
path and the dataclass path therefore always agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from . import _kernels as K
from .scene import LaneGeometry, PackedScene, PhysicalState, SceneState

# Hard (emergency) braking magnitude, also the ego's hard-brake command.
A_HARD = 4.0

# Below this speed a constant-velocity arrival-time estimate is meaningless.
EPS_V = 0.1


def step_kinematics(p: PhysicalState, dt: float) -> PhysicalState:
    """Advance a point mass by ``dt`` under its commanded acceleration.

    Uses exact constant-acceleration integration; a vehicle braking to rest
    stops at its analytic stop point instead of reversing.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    s, v = K.step_kinematics_k(p.s, p.v, p.a, dt)
    return PhysicalState(s, v, p.a)


class CollisionReport(NamedTuple):
    ego_collision: bool
    ego_partner_ids: tuple[int, ...]
    traffic_overlap_pairs: tuple[tuple[int, int], ...]


def detect_collision(scene: SceneState) -> CollisionReport:
    """Check the ego body against main-lane bodies inside the conflict zone.

    The conflict zone starts where the ego body reaches the merge point
    (``s >= -length``); before that the lanes are physically separate.
    Overlaps between main-lane vehicles are reported as well since they
    indicate a driver-model problem, not an ego collision.
    """
    ps = PackedScene.from_scene(scene)
    return _detect_collision_packed(ps)


def _detect_collision_packed(ps: PackedScene) -> CollisionReport:
    partners = []
    if ps.has_ego:
        lo = ps.ego[K.EGO_S] - ps.ego[K.EGO_LEN]
        if ps.ego[K.EGO_S] >= -ps.ego[K.EGO_LEN]:
            for i in range(ps.n_traffic):
                if (ps.tr[i, K.S] > lo
                        and ps.ego[K.EGO_S] > ps.tr[i, K.S] - ps.tr[i, K.LEN]):
                    partners.append(int(ps.ids[i]))
    pairs = []
    for i in range(ps.n_traffic - 1):
        if ps.tr[i + 1, K.S] - ps.tr[i + 1, K.LEN] < ps.tr[i, K.S]:
            pairs.append((int(ps.ids[i]), int(ps.ids[i + 1])))
    return CollisionReport(bool(partners), tuple(partners), tuple(pairs))


def wrap_respawn(scene: SceneState, geom: LaneGeometry) -> SceneState:
    """Move vehicles past the main-lane end back to the lane start.

    Velocity, acceleration and driver parameters are preserved; a wrapped
    vehicle keeps at least its equilibrium IDM gap to the current rearmost
    vehicle, so a respawn can never create an overlap.
    """
    ps = PackedScene.from_scene(scene)
    tr, ids, changed = K.respawn_k(ps.tr, ps.ids, geom.lane_start,
                                   geom.lane_end)
    if not changed:
        return scene
    return PackedScene(tr, ids, ps.ego, ps.time, ps.step_index).to_scene()


class Neighbors(NamedTuple):
    """Ids of the four observed neighbor slots (``None`` = slot empty)."""

    front_on_path: Optional[int]
    behind_merge_point: Optional[int]
    rear_of_projection: Optional[int]
    front_of_projection: Optional[int]


def find_neighbors(scene: SceneState, geom: LaneGeometry) -> Neighbors:
    """Locate the four observed neighbors of the ego.

    The ego projection sits at the same distance to the merge point on the
    main lane, which in merge-point coordinates is simply the ego ``s``.
    A neighbor only qualifies within ``geom.sensor_range`` of the ego.
    """
    if scene.ego is None:
        raise ValueError("scene has no ego vehicle")
    ps = PackedScene.from_scene(scene)
    f_path, b_merge, rear, front = K.neighbors_k(ps.tr, ps.ego[K.EGO_S],
                                                 geom.sensor_range)
    def _id(i: int) -> Optional[int]:
        return None if i < 0 else int(ps.ids[i])

    return Neighbors(_id(f_path), _id(b_merge), _id(rear), _id(front))
