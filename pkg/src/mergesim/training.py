"""Deep Q-learning with prioritized replay and a density curriculum.

Training runs stage by stage (sparser traffic first, then dense), keeping
the network, optimizer state and replay buffer across the switch.  Per
environment step: epsilon-greedy action, environment transition, buffer
insert at the running max priority, and a gradient update every
``train_freq`` steps once the warm-up has filled the buffer.  The target
network is copied periodically (counted in episodes by default) and
greedy-policy checkpoints are evaluated on held-out scenarios along the
way.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .env import DT, N_ACTIONS, ObsMode, StepStatus, env_step_packed
from .nn import AdamState, QPolicy, adam_step, new_policy, q_forward, td_loss_grad
from .policies import ObservationSource
from .replay import ReplayBuffer
from .scene import LaneGeometry, PackedScene
from .scenarios import Regime, ScenarioConfig, dense_config, mixed_config


@dataclass(frozen=True)
class TrainStage:
    regime: Regime
    steps: int


@dataclass(frozen=True)
class TrainConfig:
    stages: tuple[TrainStage, ...] = (
        TrainStage(Regime.MIXED, 1_500_000),
        TrainStage(Regime.DENSE, 1_500_000),
    )
    input_mode: ObsMode = ObsMode.BASE
    gamma: float = 0.95
    learning_rate: float = 1e-4
    buffer_capacity: int = 400_000
    priority_alpha: float = 0.7
    priority_beta: float = 1e-3
    priority_floor: float = 1e-6
    batch_size: int = 32
    train_freq: int = 4
    warmup_steps: int = 1_000
    target_update_episodes: int = 5_000
    target_update_steps: Optional[int] = None  # overrides the episode count
    exploration_fraction: float = 0.5
    eps_initial: float = 1.0
    eps_final: float = 0.01
    hidden: tuple[int, ...] = (64, 32)
    eval_every_steps: int = 25_000
    eval_episodes: int = 50
    dt: float = DT

    def __post_init__(self):
        if not self.stages or any(s.steps <= 0 for s in self.stages):
            raise ValueError("stages must have positive step counts")
        if not 0.0 < self.exploration_fraction <= 1.0:
            raise ValueError("exploration fraction must lie in (0, 1]")

    @property
    def total_steps(self) -> int:
        return sum(s.steps for s in self.stages)


def epsilon(step: int, total_steps: int, fraction: float = 0.5,
            final: float = 0.01, initial: float = 1.0) -> float:
    """Linear decay over the exploration fraction, then constant."""
    horizon = fraction * total_steps
    if step >= horizon:
        return final
    return initial + (final - initial) * (step / horizon)


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    FIELDS = ("step", "episodes", "loss", "epsilon", "eval_success",
              "eval_collision", "eval_timeout")

    def append(self, **row) -> None:
        self.rows.append({k: row.get(k, "") for k in self.FIELDS})

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            writer.writerows(self.rows)


def _default_scenario(regime: Regime) -> ScenarioConfig:
    return mixed_config() if regime is Regime.MIXED else dense_config()


SceneFactory = Callable[[Regime, np.random.Generator], PackedScene]


def train_dqn(cfg: TrainConfig, seed: int = 0,
              geom: Optional[LaneGeometry] = None,
              scene_factory: Optional[SceneFactory] = None,
              log_path: Optional[str | Path] = None,
              progress: bool = False) -> tuple[QPolicy, TrainingLog]:
    """Run the full curriculum; returns the trained policy and the log.

    Aborts with ``RuntimeError`` if the TD loss ever becomes non-finite.
    """
    geom = geom or LaneGeometry()
    if scene_factory is None:
        def scene_factory(regime, rng):
            return _sample_scene(regime, rng, geom, cfg.dt)

    root = np.random.SeedSequence(seed)
    net_ss, act_ss, scen_ss, eval_ss = root.spawn(4)
    net_rng = np.random.default_rng(net_ss)
    act_rng = np.random.default_rng(act_ss)
    scen_rng = np.random.default_rng(scen_ss)

    policy = new_policy(net_rng, cfg.input_mode, cfg.hidden, N_ACTIONS)
    target = policy
    opt = AdamState.for_policy(policy)
    buffer = ReplayBuffer(cfg.buffer_capacity, policy.n_inputs,
                          cfg.priority_alpha, cfg.priority_beta,
                          cfg.priority_floor)
    log = TrainingLog()

    total = cfg.total_steps
    stage_ends = np.cumsum([s.steps for s in cfg.stages])
    steps = 0
    episodes = 0
    episodes_at_sync = 0
    last_loss = math.nan
    next_eval = cfg.eval_every_steps

    while steps < total:
        stage_idx = int(np.searchsorted(stage_ends, steps, side="right"))
        regime = cfg.stages[stage_idx].regime
        ps = scene_factory(regime, scen_rng)
        obs_source = ObservationSource(cfg.input_mode, geom, cfg.dt)
        obs = obs_source.reset(ps)
        status = StepStatus.RUNNING

        while status is StepStatus.RUNNING and steps < total:
            eps = epsilon(steps, total, cfg.exploration_fraction,
                          cfg.eps_final, cfg.eps_initial)
            if act_rng.random() < eps:
                action = int(act_rng.integers(N_ACTIONS))
            else:
                action = int(np.argmax(q_forward(policy, obs)))

            nxt, status, rew = env_step_packed(ps, action, geom, cfg.dt)
            next_obs = obs_source.step(ps, nxt)
            buffer.add(obs, action, rew, next_obs, status.terminal)
            ps, obs = nxt, next_obs
            steps += 1

            if steps >= cfg.warmup_steps and steps % cfg.train_freq == 0 \
                    and len(buffer) >= cfg.batch_size:
                idx, batch, weights = buffer.sample(cfg.batch_size, act_rng)
                loss, grads, prios = td_loss_grad(policy, target, batch,
                                                  cfg.gamma, weights,
                                                  cfg.priority_floor)
                if not math.isfinite(loss):
                    raise RuntimeError(f"training diverged at step {steps}: "
                                       f"loss={loss}")
                policy = adam_step(opt, policy, grads, cfg.learning_rate)
                buffer.update_priorities(idx, prios)
                last_loss = loss

            if cfg.target_update_steps is not None \
                    and steps % cfg.target_update_steps == 0:
                target = policy

            if steps >= next_eval:
                _checkpoint_eval(policy, cfg, geom, scene_factory, eval_ss,
                                 episodes, steps, last_loss, eps, log,
                                 progress)
                next_eval += cfg.eval_every_steps

        episodes += 1
        if cfg.target_update_steps is None \
                and episodes - episodes_at_sync >= cfg.target_update_episodes:
            target = policy
            episodes_at_sync = episodes

    _checkpoint_eval(policy, cfg, geom, scene_factory, eval_ss, episodes,
                     steps, last_loss,
                     epsilon(steps, total, cfg.exploration_fraction,
                             cfg.eps_final, cfg.eps_initial),
                     log, progress)
    if log_path is not None:
        log.to_csv(log_path)
    return policy, log


def _checkpoint_eval(policy, cfg, geom, scene_factory, eval_ss, episodes,
                     steps, last_loss, eps, log, progress):
    # same held-out scenario stream at every checkpoint
    rates = evaluate_greedy(policy, cfg, geom, scene_factory,
                            np.random.default_rng(eval_ss),
                            cfg.eval_episodes)
    log.append(step=steps, episodes=episodes, loss=last_loss, epsilon=eps,
               eval_success=rates["success"], eval_collision=rates["collision"],
               eval_timeout=rates["timeout"])
    if progress:
        print(f"step {steps:>8}  eps {eps:.3f}  loss {last_loss:.5f}  "
              f"success {rates['success']:.2f}  "
              f"collision {rates['collision']:.2f}  "
              f"timeout {rates['timeout']:.2f}", flush=True)
    return rates


def evaluate_greedy(policy: QPolicy, cfg: TrainConfig, geom: LaneGeometry,
                    scene_factory: SceneFactory, rng: np.random.Generator,
                    episodes: int) -> dict[str, float]:
    """Success/collision/timeout shares of the greedy policy."""
    counts = {"success": 0, "collision": 0, "timeout": 0}
    regime = cfg.stages[-1].regime
    for _ in range(episodes):
        ps = scene_factory(regime, rng)
        obs_source = ObservationSource(cfg.input_mode, geom, cfg.dt)
        obs = obs_source.reset(ps)
        status = StepStatus.RUNNING
        while status is StepStatus.RUNNING:
            action = int(np.argmax(q_forward(policy, obs)))
            nxt, status, _ = env_step_packed(ps, action, geom, cfg.dt)
            obs = obs_source.step(ps, nxt)
            ps = nxt
        if status is StepStatus.GOAL_REACHED:
            counts["success"] += 1
        elif status is StepStatus.COLLISION:
            counts["collision"] += 1
        else:
            counts["timeout"] += 1
    return {k: v / episodes for k, v in counts.items()}


def _sample_scene(regime: Regime, rng: np.random.Generator,
                  geom: LaneGeometry, dt: float) -> PackedScene:
    from .scenarios import sample_initial_packed
    return sample_initial_packed(_default_scenario(regime), rng, geom, dt)
