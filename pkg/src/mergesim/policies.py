"""Action sources used by the evaluation harness.

Seven named policies reproduce the comparison lineup:

* ``rl-base`` / ``rl-fullobs`` / ``rl-belief`` - greedy value-network
  policies over the three observation kinds (the belief variant runs the
  cooperation filter between steps);
* ``mcts-fullobs`` - tree search with the true cooperation levels;
* ``mcts-c0`` / ``mcts-c05`` / ``mcts-c1`` - tree search assuming every
  driver has cooperation 0, 0.5, or 1.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Protocol

import numpy as np

from .belief import (CooperationBelief, belief_observation_packed,
                     update_belief_packed)
from .env import DT, EgoAction, ObsMode, build_observation_packed
from .mcts import (AssumeCooperation, FullObservation, MctsParams,
                   MergingModel, search, determinize)
from .nn import QPolicy, greedy_action
from .scene import LaneGeometry, PackedScene

POLICY_NAMES = ("rl-base", "rl-fullobs", "rl-belief", "mcts-fullobs",
                "mcts-c0", "mcts-c05", "mcts-c1")

RL_POLICY_MODES = {
    "rl-base": ObsMode.BASE,
    "rl-fullobs": ObsMode.FULL_OBS,
    "rl-belief": ObsMode.BELIEF,
}

MCTS_ASSUMPTIONS = {
    "mcts-fullobs": FullObservation(),
    "mcts-c0": AssumeCooperation(0.0),
    "mcts-c05": AssumeCooperation(0.5),
    "mcts-c1": AssumeCooperation(1.0),
}


class ObservationSource:
    """Produces the per-step observation vector for one episode.

    For belief observations this owns the filter state, updated from each
    consecutive scene pair before the vector is built.
    """

    def __init__(self, mode: ObsMode, geom: LaneGeometry, dt: float = DT):
        self.mode = mode
        self.geom = geom
        self.dt = dt
        self._belief: Optional[CooperationBelief] = None

    def reset(self, ps: PackedScene) -> np.ndarray:
        if self.mode is ObsMode.BELIEF:
            self._belief = CooperationBelief()
            return belief_observation_packed(ps, self._belief, self.geom)
        return build_observation_packed(ps, self.geom, self.mode)

    def step(self, prev: PackedScene, curr: PackedScene) -> np.ndarray:
        if self.mode is ObsMode.BELIEF:
            self._belief = update_belief_packed(self._belief, prev, curr,
                                                self.geom, self.dt)
            return belief_observation_packed(curr, self._belief, self.geom)
        return build_observation_packed(curr, self.geom, self.mode)

    @property
    def belief(self) -> Optional[CooperationBelief]:
        return self._belief


class Policy(Protocol):
    name: str

    def reset(self, ps: PackedScene, rng: np.random.Generator) -> None: ...

    def act(self, ps: PackedScene) -> EgoAction: ...


class QNetworkPolicy:
    """Greedy policy over a trained value network."""

    def __init__(self, name: str, q: QPolicy, geom: LaneGeometry,
                 dt: float = DT):
        expected = RL_POLICY_MODES.get(name)
        if expected is not None and q.input_mode is not expected:
            raise ValueError(f"{name} needs a {expected.value} network, "
                             f"got {q.input_mode.value}")
        self.name = name
        self.q = q
        self.obs_source = ObservationSource(q.input_mode, geom, dt)
        self._prev: Optional[PackedScene] = None
        self._obs: Optional[np.ndarray] = None

    def reset(self, ps: PackedScene, rng: np.random.Generator) -> None:
        self._prev = ps
        self._obs = self.obs_source.reset(ps)

    def act(self, ps: PackedScene) -> EgoAction:
        if ps is not self._prev:
            self._obs = self.obs_source.step(self._prev, ps)
            self._prev = ps
        return EgoAction(greedy_action(self.q, self._obs))


class MctsPolicy:
    """Receding-horizon tree search, replanned from scratch every step."""

    def __init__(self, name: str, params: MctsParams, geom: LaneGeometry,
                 dt: float = DT):
        assumption = MCTS_ASSUMPTIONS.get(name)
        if assumption is not None:
            params = replace(params, assumption=assumption)
        self.name = name
        self.params = params
        self.model = MergingModel(geom, dt, discount=params.discount)
        self._rng: Optional[np.random.Generator] = None

    def reset(self, ps: PackedScene, rng: np.random.Generator) -> None:
        self._rng = rng

    def act(self, ps: PackedScene) -> EgoAction:
        root = determinize(ps, self.params.assumption)
        action, _ = search(self.model, root, self.params, self._rng)
        return EgoAction(action)


class ConstantPolicy:
    """Always the same action (baselines and tests)."""

    def __init__(self, action: EgoAction, name: Optional[str] = None):
        self.action = EgoAction(action)
        self.name = name or f"constant-{self.action.name.lower()}"

    def reset(self, ps: PackedScene, rng: np.random.Generator) -> None:
        pass

    def act(self, ps: PackedScene) -> EgoAction:
        return self.action
