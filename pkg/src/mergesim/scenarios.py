"""Initial-state distribution and burn-in equilibration.

A scenario draws a car count for the regime, scatters that many cars over
the main lane with a minimum spacing, samples speeds and driver behavior,
relaxes the ego-free scene under the driver models for a random burn-in
interval, then inserts the ego at the merge-lane start.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import A_HARD, EPS_V
from .env import DT
from .scene import (LaneGeometry, PackedScene, SceneState, scene_from_dict,
                    scene_to_dict)


class Regime(enum.Enum):
    MIXED = "mixed"   # 5 to 12 cars: sparse and dense episodes both occur
    DENSE = "dense"   # 10 to 14 cars

    @property
    def car_count_range(self) -> tuple[int, int]:
        return (5, 12) if self is Regime.MIXED else (10, 14)


@dataclass(frozen=True)
class ScenarioConfig:
    regime: Regime = Regime.MIXED
    car_count_range: Optional[tuple[int, int]] = None  # None: regime default
    v_mean: float = 5.0
    v_std: float = 1.0
    v_clamp: tuple[float, float] = (0.0, 10.0)
    v0_choices: tuple[float, ...] = (4.0, 5.0, 6.0)
    cooperation_range: tuple[float, float] = (0.0, 1.0)
    burn_in_range_s: tuple[float, float] = (10.0, 20.0)
    car_length: float = 4.0
    ego_speed: float = 5.0
    ego_length: float = 4.0
    # IDM constants shared by all sampled drivers
    min_gap: float = 1.0
    time_headway: float = 0.2
    max_accel: float = 2.0
    comfort_decel: float = 2.0
    accel_exponent: float = 4.0

    def __post_init__(self):
        lo, hi = self.counts
        if not (0 < lo <= hi):
            raise ValueError("car count bounds must be positive and ordered")
        if not (0 <= self.burn_in_range_s[0] <= self.burn_in_range_s[1]):
            raise ValueError("burn-in range must be non-negative and ordered")

    @property
    def counts(self) -> tuple[int, int]:
        return self.car_count_range or self.regime.car_count_range


# Retries before giving up on a sample whose burn-in left an overlap
# (possible but rare when the initial draw stacks fast cars onto tiny gaps).
_MAX_RESAMPLES = 100


def sample_initial_packed(cfg: ScenarioConfig, rng: np.random.Generator,
                          geom: Optional[LaneGeometry] = None,
                          dt: float = DT) -> PackedScene:
    """Sample one initial scene (packed form)."""
    geom = geom or LaneGeometry()
    for _ in range(_MAX_RESAMPLES):
        ps = _sample_once(cfg, rng, geom, dt)
        if ps is not None:
            return ps
    raise RuntimeError("could not sample an overlap-free scene; "
                       "check scenario configuration against lane capacity")


def sample_initial_scene(cfg: ScenarioConfig, rng: np.random.Generator,
                         geom: Optional[LaneGeometry] = None,
                         dt: float = DT) -> SceneState:
    return sample_initial_packed(cfg, rng, geom, dt).to_scene()


def _sample_once(cfg: ScenarioConfig, rng: np.random.Generator,
                 geom: LaneGeometry, dt: float) -> Optional[PackedScene]:
    lo, hi = cfg.counts
    n = int(rng.integers(lo, hi + 1))

    # Uniform order statistics with minimum front-bumper spacing.
    spacing = cfg.car_length + cfg.min_gap
    first = geom.lane_start + cfg.car_length
    room = geom.lane_end - first - (n - 1) * spacing
    if room < 0:
        raise ValueError(f"cannot fit {n} cars on the main lane")
    base = np.sort(rng.uniform(0.0, room, size=n))
    s = first + base + spacing * np.arange(n)

    v = rng.normal(cfg.v_mean, cfg.v_std, size=n)
    v = np.clip(v, cfg.v_clamp[0], cfg.v_clamp[1])
    v0 = rng.choice(np.asarray(cfg.v0_choices), size=n)
    c = rng.uniform(cfg.cooperation_range[0], cfg.cooperation_range[1], size=n)

    tr = np.empty((n, K.N_COLS))
    tr[:, K.S] = s
    tr[:, K.V] = v
    tr[:, K.A] = 0.0
    tr[:, K.LEN] = cfg.car_length
    tr[:, K.C] = c
    tr[:, K.V0] = v0
    tr[:, K.S0] = cfg.min_gap
    tr[:, K.T] = cfg.time_headway
    tr[:, K.AMAX] = cfg.max_accel
    tr[:, K.B] = cfg.comfort_decel
    tr[:, K.DELTA] = cfg.accel_exponent
    ids = np.arange(1, n + 1, dtype=np.int64)

    lo_b, hi_b = cfg.burn_in_range_s
    n_burn = int(rng.integers(int(round(lo_b / dt)),
                              int(round(hi_b / dt)) + 1))
    if n_burn > 0:
        tr, ids = K.burnin_k(tr, ids, n_burn, dt, geom.lane_start,
                             geom.lane_end, geom.sensor_range, EPS_V, A_HARD)
    if K.main_overlap_k(tr) >= 0:
        return None

    ego = np.array([geom.merge_start, cfg.ego_speed, 0.0, cfg.ego_length])
    return PackedScene(tr, ids, ego, 0.0, 0)


def simulate_ego_free(scene: SceneState, n_steps: int,
                      geom: Optional[LaneGeometry] = None,
                      dt: float = DT) -> SceneState:
    """Advance an ego-free scene under the driver models (with respawn)."""
    if scene.ego is not None:
        raise ValueError("simulate_ego_free expects a scene without an ego")
    geom = geom or LaneGeometry()
    ps = PackedScene.from_scene(scene)
    tr, ids = K.burnin_k(ps.tr, ps.ids, n_steps, dt, geom.lane_start,
                         geom.lane_end, geom.sensor_range, EPS_V, A_HARD)
    return PackedScene(tr, ids, None, scene.time + n_steps * dt,
                       scene.step_index + n_steps).to_scene()


def mixed_config(**overrides) -> ScenarioConfig:
    return replace(ScenarioConfig(regime=Regime.MIXED), **overrides)


def dense_config(**overrides) -> ScenarioConfig:
    return replace(ScenarioConfig(regime=Regime.DENSE), **overrides)


def episode_seed_sequence(base_seed: int, episode: int) -> np.random.SeedSequence:
    """Per-episode RNG root; identical whether episodes run serial or parallel."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(episode,))


def save_scenarios(path: str | Path, scenes: list[SceneState]) -> None:
    """Write scenarios as JSON lines for reproducible evaluation sets."""
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_dict(scene)) + "\n")


def load_scenarios(path: str | Path) -> list[SceneState]:
    scenes = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                scenes.append(scene_from_dict(json.loads(line)))
    return scenes
