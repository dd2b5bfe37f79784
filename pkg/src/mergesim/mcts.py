"""Online Monte Carlo tree search with double progressive widening.

The search is generic over a generative model (``step``, ``state_key``,
``rollout``, ``n_actions``) so its convergence can be checked against
exact value iteration on small tabular problems.  The merging adapter
plugs in the packed-scene environment; since the environment is
deterministic once cooperation levels are fixed, state widening there
degenerates to exactly one child per action, which the structural audit
verifies.

Planner variants differ only in how they fill in the unobserved
cooperation levels at the root: assume a fixed value for everyone, or
copy the true ones from the simulator (full observation).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Hashable, Optional, Union

import numpy as np

from .core import A_HARD, EPS_V
from .env import DT, EgoAction, N_ACTIONS, env_step_packed, timeout_steps
from . import _kernels as K
from .scene import LaneGeometry, PackedScene, SceneState


@dataclass(frozen=True)
class AssumeCooperation:
    """Plan as if every driver had this cooperation level."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("assumed cooperation must lie in [0, 1]")


@dataclass(frozen=True)
class FullObservation:
    """Plan with the true cooperation levels (privileged information)."""


Assumption = Union[AssumeCooperation, FullObservation]


@dataclass(frozen=True)
class MctsParams:
    iterations: int = 10_000
    max_depth: int = 20
    ucb_c: float = 1.0
    k_action: float = 7.0
    alpha_action: float = 0.5
    k_state: float = 1.0
    alpha_state: float = 0.1
    discount: float = 0.95
    time_limit_s: Optional[float] = None
    rollout_policy: str = "release"
    assumption: Assumption = field(default_factory=FullObservation)

    def __post_init__(self):
        if self.iterations <= 0 or self.max_depth <= 0:
            raise ValueError("iteration budget and depth must be positive")
        if not (0.0 < self.alpha_action < 1.0 and 0.0 < self.alpha_state < 1.0):
            raise ValueError("widening exponents must lie in (0, 1)")


def determinize(scene: SceneState | PackedScene,
                assumption: Assumption) -> PackedScene:
    """Fill in cooperation levels for planning."""
    ps = scene if isinstance(scene, PackedScene) else PackedScene.from_scene(scene)
    if isinstance(assumption, AssumeCooperation):
        return ps.with_cooperation(assumption.value)
    return ps.copy()


class SearchNode:
    """Bookkeeping for one decision node."""

    __slots__ = ("state", "depth", "terminal", "visits", "n_admitted",
                 "action_visits", "action_values", "children")

    def __init__(self, state, depth: int, terminal: bool, n_actions: int):
        self.state = state
        self.depth = depth
        self.terminal = terminal
        self.visits = 0
        self.n_admitted = 0
        self.action_visits = [0] * n_actions
        self.action_values = [0.0] * n_actions
        # per action: dict state-key -> [child, edge reward, pass count]
        self.children: list[dict[Hashable, list]] = [dict() for _ in range(n_actions)]


def _widening_bound(k: float, alpha: float, n: int) -> int:
    return math.ceil(k * max(n, 1) ** alpha)


def search(model, root_state, params: MctsParams,
           rng: np.random.Generator) -> tuple[int, SearchNode]:
    """Run the budgeted search; returns (root action, root node).

    The recommended action maximizes root visit count, ties broken toward
    the lowest action index.
    """
    root = SearchNode(root_state, 0, False, model.n_actions)
    deadline = (None if params.time_limit_s is None
                else time.perf_counter() + params.time_limit_s)
    for _ in range(params.iterations):
        if deadline is not None and time.perf_counter() > deadline:
            break
        _simulate(model, root, params, rng)
    best = 0
    for a in range(1, model.n_actions):
        if root.action_visits[a] > root.action_visits[best]:
            best = a
    return best, root


def _simulate(model, node: SearchNode, params: MctsParams,
              rng: np.random.Generator) -> float:
    """One simulation from ``node``; returns its discounted return."""
    if node.terminal or node.depth >= params.max_depth:
        node.visits += 1
        return 0.0

    n_actions = model.n_actions
    allowed = min(n_actions,
                  _widening_bound(params.k_action, params.alpha_action,
                                  node.visits))
    if node.n_admitted < allowed:
        a = node.n_admitted
        node.n_admitted += 1
    else:
        a = _ucb_pick(node, params.ucb_c)

    kids = node.children[a]
    n_a = node.action_visits[a]
    limit = _widening_bound(params.k_state, params.alpha_state, n_a)
    if len(kids) < limit:
        next_state, edge_reward, terminal = model.step(node.state, a, rng)
        key = model.state_key(next_state)
        entry = kids.get(key)
        if entry is None:
            child = SearchNode(next_state, node.depth + 1, terminal, n_actions)
            child.visits = 1
            kids[key] = [child, edge_reward, 1]
            if terminal:
                value = edge_reward
            else:
                tail = model.rollout(next_state,
                                     params.max_depth - node.depth - 1, rng)
                value = edge_reward + params.discount * tail
        else:
            entry[2] += 1
            child, edge_reward = entry[0], entry[1]
            value = edge_reward
            if not child.terminal:
                value += params.discount * _simulate(model, child, params, rng)
    else:
        entry = _pick_child(kids, rng)
        entry[2] += 1
        child, edge_reward = entry[0], entry[1]
        value = edge_reward
        if not child.terminal:
            value += params.discount * _simulate(model, child, params, rng)

    node.visits += 1
    node.action_visits[a] = n_a + 1
    q = node.action_values[a]
    node.action_values[a] = q + (value - q) / (n_a + 1)
    return value


def _ucb_pick(node: SearchNode, c: float) -> int:
    log_n = math.log(node.visits)
    best = 0
    best_score = -math.inf
    for a in range(node.n_admitted):
        n_a = node.action_visits[a]
        score = node.action_values[a] + c * math.sqrt(log_n / n_a)
        if score > best_score:
            best = a
            best_score = score
    return best


def _pick_child(kids: dict, rng: np.random.Generator) -> list:
    """Sample an existing child proportional to its pass count."""
    entries = list(kids.values())
    if len(entries) == 1:
        return entries[0]
    total = 0
    for e in entries:
        total += e[2]
    u = rng.random() * total
    acc = 0
    for e in entries:
        acc += e[2]
        if u < acc:
            return e
    return entries[-1]


def audit_tree(root: SearchNode, params: MctsParams,
               expect_single_child: bool = False) -> dict:
    """Verify the widening bounds on every node; returns tree statistics."""
    n_nodes = 0
    max_children = 0
    stack = [root]
    while stack:
        node = stack.pop()
        n_nodes += 1
        bound_a = _widening_bound(params.k_action, params.alpha_action,
                                  node.visits)
        if node.n_admitted > min(len(node.children), bound_a):
            raise AssertionError("action widening bound violated")
        for a in range(node.n_admitted):
            kids = node.children[a]
            bound_s = _widening_bound(params.k_state, params.alpha_state,
                                      node.action_visits[a])
            if len(kids) > bound_s:
                raise AssertionError("state widening bound violated")
            if expect_single_child and len(kids) > 1:
                raise AssertionError(
                    "deterministic model produced several children")
            max_children = max(max_children, len(kids))
            for child, _, _ in kids.values():
                stack.append(child)
    return {"nodes": n_nodes, "max_children_per_action": max_children}


class MergingModel:
    """Generative interface of the merging environment for the search."""

    n_actions = N_ACTIONS

    def __init__(self, geom: LaneGeometry, dt: float = DT,
                 n_timeout: Optional[int] = None, discount: float = 0.95,
                 a_hard: float = A_HARD, eps_v: float = EPS_V):
        self.geom = geom
        self.dt = dt
        self.n_timeout = timeout_steps(dt) if n_timeout is None else n_timeout
        self.discount = discount
        self.a_hard = a_hard
        self.eps_v = eps_v

    def step(self, ps: PackedScene, action: int, rng):
        nxt, status, rew = env_step_packed(ps, EgoAction(action), self.geom,
                                           self.dt, self.a_hard, self.eps_v,
                                           self.n_timeout)
        return nxt, rew, status.terminal

    def state_key(self, ps: PackedScene) -> bytes:
        return ps.key()

    def rollout(self, ps: PackedScene, max_steps: int, rng) -> float:
        """Hold zero acceleration to the horizon; discounted return."""
        if max_steps <= 0:
            return 0.0
        return float(K.rollout_release_k(
            ps.tr, ps.ids, ps.ego, ps.step_index, max_steps, self.n_timeout,
            self.dt, self.geom.lane_start, self.geom.lane_end,
            self.geom.goal_s, self.geom.sensor_range, self.eps_v,
            self.a_hard, self.discount))


def plan(scene: SceneState | PackedScene, params: MctsParams,
         rng: np.random.Generator, geom: Optional[LaneGeometry] = None,
         model: Optional[MergingModel] = None) -> EgoAction:
    """Pick the next ego action by searching from this scene."""
    if model is None:
        model = MergingModel(geom or LaneGeometry(), discount=params.discount)
    root_state = determinize(scene, params.assumption)
    action, _ = search(model, root_state, params, rng)
    return EgoAction(action)
