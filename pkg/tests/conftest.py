import numpy as np
import pytest

from mergesim.scene import (DriverParams, Lane, LaneGeometry, PhysicalState,
                            SceneState, VehicleState, ego_vehicle)


@pytest.fixture
def geom():
    return LaneGeometry()


def car(vid, s, v=5.0, a=0.0, cooperation=0.0, desired_speed=5.0,
        length=4.0, **driver_kwargs):
    driver = DriverParams(cooperation=cooperation,
                          desired_speed=desired_speed, **driver_kwargs)
    return VehicleState(vid, PhysicalState(s, v, a), Lane.MAIN, length, driver)


def make_scene(cars=(), ego=None, time=0.0, step_index=0):
    """Scene from (id, s, v[, cooperation[, v0]]) tuples plus an optional
    (s, v[, a]) ego."""
    traffic = []
    for spec in cars:
        vid, s, v = spec[0], spec[1], spec[2]
        coop = spec[3] if len(spec) > 3 else 0.0
        v0 = spec[4] if len(spec) > 4 else 5.0
        traffic.append(car(vid, s, v, cooperation=coop, desired_speed=v0))
    traffic.sort(key=lambda veh: veh.s)
    ego_veh = None
    if ego is not None:
        ego_veh = ego_vehicle(ego[0], ego[1], ego[2] if len(ego) > 2 else 0.0)
    return SceneState(ego_veh, tuple(traffic), time, step_index)


def random_scene(rng, n_cars=None, with_ego=True):
    """Unstructured random scene for oracle comparisons."""
    n = int(rng.integers(0, 9)) if n_cars is None else n_cars
    positions = np.sort(rng.uniform(-100.0, 50.0, size=n))
    # enforce strict sorting with a minimum separation (bodies may overlap)
    positions += np.arange(n) * 1e-3
    cars_spec = []
    for i, s in enumerate(positions):
        cars_spec.append((i + 1, float(s), float(rng.uniform(0, 8)),
                          float(rng.uniform(0, 1)),
                          float(rng.choice([4.0, 5.0, 6.0]))))
    ego = None
    if with_ego:
        ego = (float(rng.uniform(-55.0, 45.0)), float(rng.uniform(0, 8)),
               float(rng.uniform(-4, 2)))
    return make_scene(cars_spec, ego)
