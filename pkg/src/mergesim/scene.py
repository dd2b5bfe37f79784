"""Domain types for the merging scenario.

A single signed longitudinal axis is used for both lanes, with its origin
at the merge point: main-lane vehicles run from ``-merge_point_s`` up to
``main_lane_length - merge_point_s``, and the ego's distance to the merge
point along the merge lane maps to negative ``s``.  Projecting the ego
onto the main lane is therefore the identity on coordinates.

Two scene representations exist:

* :class:`SceneState` - immutable dataclasses, validated, serializable.
  This is the public face used by tests, traces and scenario files.
* :class:`PackedScene` - the flat array form consumed by the compiled
  kernels.  Episode loops, training and tree search run on this.

``SceneState.s`` is always the *front bumper* position; a vehicle's body
occupies ``[s - length, s]``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K

EGO_ID = -1

SCENE_SCHEMA_VERSION = 1


class Lane(enum.Enum):
    MAIN = "main"
    MERGE = "merge"


@dataclass(frozen=True)
class LaneGeometry:
    """Road layout in merge-point coordinates (all lengths in meters)."""

    main_lane_length: float = 150.0
    merge_point_s: float = 100.0
    goal_offset: float = 50.0
    merge_lane_length: float = 50.0
    sensor_range: float = 60.0

    def __post_init__(self):
        if min(self.main_lane_length, self.merge_point_s, self.goal_offset,
               self.merge_lane_length, self.sensor_range) <= 0:
            raise ValueError("all geometry lengths must be positive")
        if self.merge_point_s + self.goal_offset > self.main_lane_length:
            raise ValueError("goal lies beyond the end of the main lane")

    @property
    def lane_start(self) -> float:
        """s coordinate of the main-lane start."""
        return -self.merge_point_s

    @property
    def lane_end(self) -> float:
        """s coordinate of the main-lane end."""
        return self.main_lane_length - self.merge_point_s

    @property
    def goal_s(self) -> float:
        """s coordinate of the ego goal."""
        return self.goal_offset

    @property
    def merge_start(self) -> float:
        """s coordinate of the merge-lane start (ego spawn)."""
        return -self.merge_lane_length


@dataclass(frozen=True)
class DriverParams:
    """Per-driver behavior: cooperation level plus IDM constants."""

    cooperation: float = 0.0
    desired_speed: float = 5.0
    min_gap: float = 1.0
    time_headway: float = 0.2
    max_accel: float = 2.0
    comfort_decel: float = 2.0
    accel_exponent: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.cooperation <= 1.0:
            raise ValueError("cooperation must lie in [0, 1]")
        if min(self.desired_speed, self.min_gap, self.time_headway,
               self.max_accel, self.comfort_decel) <= 0:
            raise ValueError("IDM parameters must be positive")


@dataclass(frozen=True)
class PhysicalState:
    """Longitudinal state (front-bumper position, speed, commanded accel)."""

    s: float
    v: float
    a: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("velocity must be non-negative")


@dataclass(frozen=True)
class VehicleState:
    id: int
    phys: PhysicalState
    lane: Lane
    length: float = 4.0
    driver: Optional[DriverParams] = None

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("vehicle length must be positive")

    @property
    def s(self) -> float:
        return self.phys.s

    @property
    def v(self) -> float:
        return self.phys.v

    @property
    def a(self) -> float:
        return self.phys.a


def ego_vehicle(s: float, v: float, a: float = 0.0,
                length: float = 4.0) -> VehicleState:
    return VehicleState(EGO_ID, PhysicalState(s, v, a), Lane.MERGE, length)


@dataclass(frozen=True)
class SceneState:
    """Ego plus the ordered main-lane traffic at one instant.

    ``ego`` may be ``None`` for the ego-free scenes used during burn-in.
    Traffic is strictly sorted by ``s``; overlapping bodies are allowed
    (that is what a collision looks like) and are reported by
    :func:`mergesim.core.detect_collision`.
    """

    ego: Optional[VehicleState]
    traffic: tuple[VehicleState, ...]
    time: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "traffic", tuple(self.traffic))
        if self.ego is not None:
            if self.ego.lane is not Lane.MERGE:
                raise ValueError("ego must be on the merge lane")
            if self.ego.driver is not None:
                raise ValueError("ego carries no driver model")
        seen = set()
        prev = -np.inf
        for veh in self.traffic:
            if veh.lane is not Lane.MAIN:
                raise ValueError("traffic vehicles must be on the main lane")
            if veh.driver is None:
                raise ValueError(f"traffic vehicle {veh.id} needs DriverParams")
            if veh.s <= prev:
                raise ValueError("traffic must be strictly sorted by s")
            if veh.id in seen or veh.id == EGO_ID:
                raise ValueError("vehicle ids must be unique")
            seen.add(veh.id)
            prev = veh.s

    def vehicle(self, vehicle_id: int) -> VehicleState:
        if vehicle_id == EGO_ID and self.ego is not None:
            return self.ego
        for veh in self.traffic:
            if veh.id == vehicle_id:
                return veh
        raise KeyError(f"no vehicle with id {vehicle_id}")


class PackedScene:
    """Array form of a scene, shared representation of all hot loops.

    Treat instances as immutable: kernels return fresh arrays and callers
    must not write into ``tr``/``ids``/``ego``.
    """

    __slots__ = ("tr", "ids", "ego", "time", "step_index")

    def __init__(self, tr: np.ndarray, ids: np.ndarray,
                 ego: Optional[np.ndarray], time: float = 0.0,
                 step_index: int = 0):
        self.tr = tr
        self.ids = ids
        self.ego = ego
        self.time = time
        self.step_index = step_index

    @property
    def has_ego(self) -> bool:
        return self.ego is not None

    @property
    def n_traffic(self) -> int:
        return self.tr.shape[0]

    def ego_or_zeros(self) -> np.ndarray:
        return self.ego if self.ego is not None else np.zeros(4)

    def copy(self) -> "PackedScene":
        return PackedScene(self.tr.copy(), self.ids.copy(),
                           None if self.ego is None else self.ego.copy(),
                           self.time, self.step_index)

    def key(self) -> bytes:
        """Stable byte key identifying the physical scene (search node id)."""
        ego_b = b"" if self.ego is None else self.ego.tobytes()
        return self.tr.tobytes() + ego_b + self.step_index.to_bytes(4, "little")

    def with_cooperation(self, value: float) -> "PackedScene":
        tr = self.tr.copy()
        tr[:, K.C] = value
        return PackedScene(tr, self.ids.copy(),
                           None if self.ego is None else self.ego.copy(),
                           self.time, self.step_index)

    @staticmethod
    def from_scene(scene: SceneState) -> "PackedScene":
        n = len(scene.traffic)
        tr = np.empty((n, K.N_COLS))
        ids = np.empty(n, dtype=np.int64)
        for i, veh in enumerate(scene.traffic):
            d = veh.driver
            tr[i] = (veh.s, veh.v, veh.a, veh.length, d.cooperation,
                     d.desired_speed, d.min_gap, d.time_headway, d.max_accel,
                     d.comfort_decel, d.accel_exponent)
            ids[i] = veh.id
        ego = None
        if scene.ego is not None:
            e = scene.ego
            ego = np.array([e.s, e.v, e.a, e.length])
        return PackedScene(tr, ids, ego, scene.time, scene.step_index)

    def to_scene(self) -> SceneState:
        traffic = []
        for i in range(self.n_traffic):
            row = self.tr[i]
            traffic.append(VehicleState(
                int(self.ids[i]),
                PhysicalState(float(row[K.S]), float(row[K.V]), float(row[K.A])),
                Lane.MAIN,
                float(row[K.LEN]),
                DriverParams(float(row[K.C]), float(row[K.V0]), float(row[K.S0]),
                             float(row[K.T]), float(row[K.AMAX]), float(row[K.B]),
                             float(row[K.DELTA])),
            ))
        ego = None
        if self.ego is not None:
            ego = VehicleState(EGO_ID,
                               PhysicalState(float(self.ego[K.EGO_S]),
                                             float(self.ego[K.EGO_V]),
                                             float(self.ego[K.EGO_A])),
                               Lane.MERGE, float(self.ego[K.EGO_LEN]))
        return SceneState(ego, tuple(traffic), self.time, self.step_index)


def pack(scene: SceneState) -> PackedScene:
    return PackedScene.from_scene(scene)


def unpack(packed: PackedScene) -> SceneState:
    return packed.to_scene()


# ---------------------------------------------------------------------------
# JSON serialization (scenario files and episode traces)
# ---------------------------------------------------------------------------

def scene_to_dict(scene: SceneState) -> dict:
    def veh(v: VehicleState) -> dict:
        d = {"id": v.id, "s": v.s, "v": v.v, "a": v.a, "length": v.length}
        if v.driver is not None:
            p = v.driver
            d["driver"] = {
                "cooperation": p.cooperation,
                "desired_speed": p.desired_speed,
                "min_gap": p.min_gap,
                "time_headway": p.time_headway,
                "max_accel": p.max_accel,
                "comfort_decel": p.comfort_decel,
                "accel_exponent": p.accel_exponent,
            }
        return d

    return {
        "schema": SCENE_SCHEMA_VERSION,
        "time": scene.time,
        "step_index": scene.step_index,
        "ego": None if scene.ego is None else veh(scene.ego),
        "traffic": [veh(v) for v in scene.traffic],
    }


def scene_from_dict(data: dict) -> SceneState:
    if data.get("schema") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene schema: {data.get('schema')!r}")

    def veh(d: dict, lane: Lane) -> VehicleState:
        driver = None
        if "driver" in d and d["driver"] is not None:
            driver = DriverParams(**d["driver"])
        return VehicleState(d["id"], PhysicalState(d["s"], d["v"], d["a"]),
                            lane, d["length"], driver)

    ego = None if data["ego"] is None else veh(data["ego"], Lane.MERGE)
    traffic = tuple(veh(d, Lane.MAIN) for d in data["traffic"])
    return SceneState(ego, traffic, data["time"], data["step_index"])


def scene_to_json(scene: SceneState) -> str:
    return json.dumps(scene_to_dict(scene))


def scene_from_json(text: str) -> SceneState:
    return scene_from_dict(json.loads(text))
