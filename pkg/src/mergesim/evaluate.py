"""Batch evaluation: episodes, metrics aggregation, policy comparison.

Episodes are reproducible end to end: every episode ``i`` of a run draws
its scenario and its policy randomness from seed streams derived from
``(seed, i)``, so results are identical whether episodes run serially or
across worker processes, and different policies evaluated with the same
seed face exactly the same scenario set (common random numbers).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .env import DT, EgoAction, StepStatus, env_step_packed, timeout_steps
from .mcts import MctsParams
from .nn import load_policy
from .policies import (MCTS_ASSUMPTIONS, POLICY_NAMES, RL_POLICY_MODES,
                       MctsPolicy, Policy, QNetworkPolicy)
from .scene import LaneGeometry, PackedScene, scene_to_dict
from .scenarios import (Regime, ScenarioConfig, dense_config,
                        episode_seed_sequence, mixed_config,
                        sample_initial_packed)

TRACE_SCHEMA_VERSION = 1

OUT_DIR_ENV = "MERGESIM_OUT_DIR"


@dataclass(frozen=True)
class EvalConfig:
    policy: str = "mcts-fullobs"
    regime: Regime = Regime.DENSE
    episodes: int = 1000
    seed: int = 0
    export_traces: bool = False
    workers: int = 1
    policy_file: Optional[str] = None
    mcts: MctsParams = field(default_factory=MctsParams)
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.episodes <= 0:
            raise ValueError("episode count must be positive")


@dataclass(frozen=True)
class Metrics:
    """Aggregate results of one policy over one scenario set.

    Rates are percentages; the three shares always partition 100 %.
    ``mean_steps_to_goal`` averages successful episodes only.
    """

    policy: str
    episodes: int
    collision_rate: float
    timeout_rate: float
    success_rate: float
    collision_ci: float
    timeout_ci: float
    success_ci: float
    mean_steps_to_goal: float
    steps_to_goal_se: float


@dataclass(frozen=True)
class EpisodeRecord:
    status: StepStatus
    steps: int
    reward_sum: float
    trace: Optional[list] = None


def make_policy(name: str, geom: LaneGeometry,
                policy_file: Optional[str] = None,
                mcts_params: Optional[MctsParams] = None,
                dt: float = DT) -> Policy:
    """Instantiate one of the seven named policies."""
    if name in RL_POLICY_MODES:
        if policy_file is None:
            raise ValueError(f"policy {name} needs a trained policy file")
        q = load_policy(policy_file, expect_mode=RL_POLICY_MODES[name])
        return QNetworkPolicy(name, q, geom, dt)
    if name in MCTS_ASSUMPTIONS:
        return MctsPolicy(name, mcts_params or MctsParams(), geom, dt)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


def run_episode(policy: Policy, ps0: PackedScene, rng: np.random.Generator,
                geom: LaneGeometry, dt: float = DT,
                collect_trace: bool = False) -> EpisodeRecord:
    """Roll one episode to termination under the policy's actions."""
    n_timeout = timeout_steps(dt)
    ps = ps0
    policy.reset(ps, rng)
    reward_sum = 0.0
    steps = 0
    trace = [] if collect_trace else None
    status = StepStatus.RUNNING
    while status is StepStatus.RUNNING:
        action = policy.act(ps)
        nxt, status, rew = env_step_packed(ps, action, geom, dt,
                                           n_timeout=n_timeout)
        reward_sum += rew
        steps += 1
        if collect_trace:
            record = {
                "schema": TRACE_SCHEMA_VERSION,
                "time": nxt.time,
                "scene": scene_to_dict(nxt.to_scene()),
                "action": EgoAction(action).name,
                "reward": rew,
                "status": status.value,
            }
            belief = getattr(getattr(policy, "obs_source", None), "belief", None)
            if belief is not None:
                record["belief"] = {str(k): v for k, v in belief.theta.items()}
            trace.append(record)
        ps = nxt
    return EpisodeRecord(status, steps, reward_sum, trace)


def _scenario_config(regime: Regime) -> ScenarioConfig:
    return mixed_config() if regime is Regime.MIXED else dense_config()


def _run_range(cfg: EvalConfig, geom: LaneGeometry, start: int, stop: int,
               collect_traces: bool) -> list[tuple]:
    policy = make_policy(cfg.policy, geom, cfg.policy_file, cfg.mcts)
    scen_cfg = _scenario_config(cfg.regime)
    out = []
    for i in range(start, stop):
        ss = episode_seed_sequence(cfg.seed, i)
        scen_ss, pol_ss = ss.spawn(2)
        ps0 = sample_initial_packed(scen_cfg, np.random.default_rng(scen_ss),
                                    geom)
        rec = run_episode(policy, ps0, np.random.default_rng(pol_ss), geom,
                          collect_trace=collect_traces)
        out.append((i, rec.status.value, rec.steps, rec.reward_sum, rec.trace))
    return out


def _worker(args) -> list[tuple]:
    cfg_dict, geom, start, stop, collect_traces = args
    cfg = EvalConfig(**cfg_dict)
    return _run_range(cfg, geom, start, stop, collect_traces)


def run_episodes(cfg: EvalConfig,
                 geom: Optional[LaneGeometry] = None) -> list[EpisodeRecord]:
    """All episode records of one evaluation, ordered by episode index."""
    geom = geom or LaneGeometry()
    collect = cfg.export_traces
    if cfg.workers <= 1:
        rows = _run_range(cfg, geom, 0, cfg.episodes, collect)
    else:
        chunk = math.ceil(cfg.episodes / cfg.workers)
        jobs = []
        cfg_dict = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
        for w in range(cfg.workers):
            start, stop = w * chunk, min((w + 1) * chunk, cfg.episodes)
            if start < stop:
                jobs.append((cfg_dict, geom, start, stop, collect))
        rows = []
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for part in pool.map(_worker, jobs):
                rows.extend(part)
    rows.sort(key=lambda r: r[0])
    return [EpisodeRecord(StepStatus(status), steps, rew, trace)
            for _, status, steps, rew, trace in rows]


def binomial_ci_halfwidth(p: float, n: int) -> float:
    """95 % normal-approximation half-width, in percentage points."""
    return 196.0 * math.sqrt(p * (1.0 - p) / n)


def aggregate_metrics(policy: str, records: list[EpisodeRecord]) -> Metrics:
    n = len(records)
    collisions = sum(r.status is StepStatus.COLLISION for r in records)
    timeouts = sum(r.status is StepStatus.TIMED_OUT for r in records)
    success_steps = [r.steps for r in records
                     if r.status is StepStatus.GOAL_REACHED]
    k = len(success_steps)
    mean_steps = float(np.mean(success_steps)) if k else math.nan
    se = (float(np.std(success_steps, ddof=1)) / math.sqrt(k)
          if k >= 2 else math.nan)
    return Metrics(
        policy=policy,
        episodes=n,
        collision_rate=100.0 * collisions / n,
        timeout_rate=100.0 * timeouts / n,
        success_rate=100.0 * k / n,
        collision_ci=binomial_ci_halfwidth(collisions / n, n),
        timeout_ci=binomial_ci_halfwidth(timeouts / n, n),
        success_ci=binomial_ci_halfwidth(k / n, n),
        mean_steps_to_goal=mean_steps,
        steps_to_goal_se=se,
    )


def resolve_out_dir(explicit: Optional[str]) -> Path:
    out = explicit or os.environ.get(OUT_DIR_ENV) or "mergesim_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


METRICS_FIELDS = ("policy", "episodes", "collision_pct", "collision_ci",
                  "timeout_pct", "timeout_ci", "success_pct", "success_ci",
                  "mean_steps_to_goal", "steps_to_goal_se")


def _metrics_row(m: Metrics) -> list[str]:
    return [m.policy, str(m.episodes),
            f"{m.collision_rate:.4f}", f"{m.collision_ci:.4f}",
            f"{m.timeout_rate:.4f}", f"{m.timeout_ci:.4f}",
            f"{m.success_rate:.4f}", f"{m.success_ci:.4f}",
            f"{m.mean_steps_to_goal:.4f}", f"{m.steps_to_goal_se:.4f}"]


def write_metrics_csv(path: Path, metrics: list[Metrics]) -> None:
    lines = [",".join(METRICS_FIELDS)]
    lines += [",".join(_metrics_row(m)) for m in metrics]
    path.write_text("\n".join(lines) + "\n")


def write_long_format(path: Path, metrics: list[Metrics]) -> None:
    """Plot-ready long format: one (policy, metric, value, ci) per line."""
    lines = ["policy,metric,value,ci_halfwidth"]
    for m in metrics:
        lines.append(f"{m.policy},collision_pct,{m.collision_rate:.4f},"
                     f"{m.collision_ci:.4f}")
        lines.append(f"{m.policy},timeout_pct,{m.timeout_rate:.4f},"
                     f"{m.timeout_ci:.4f}")
        lines.append(f"{m.policy},mean_steps_to_goal,"
                     f"{m.mean_steps_to_goal:.4f},{m.steps_to_goal_se:.4f}")
    path.write_text("\n".join(lines) + "\n")


def _write_traces(out_dir: Path, cfg: EvalConfig,
                  records: list[EpisodeRecord]) -> None:
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(exist_ok=True)
    path = traces_dir / f"{cfg.policy}.jsonl"
    with open(path, "w") as fh:
        for i, rec in enumerate(records):
            for row in rec.trace or ():
                fh.write(json.dumps({"episode": i, **row}) + "\n")


def evaluate(cfg: EvalConfig, geom: Optional[LaneGeometry] = None,
             write_outputs: bool = True) -> Metrics:
    """Evaluate one policy; optionally write metrics.csv and summary.json."""
    geom = geom or LaneGeometry()
    records = run_episodes(cfg, geom)
    metrics = aggregate_metrics(cfg.policy, records)
    if write_outputs:
        out_dir = resolve_out_dir(cfg.out_dir)
        write_metrics_csv(out_dir / "metrics.csv", [metrics])
        (out_dir / "summary.json").write_text(json.dumps({
            "config": {"policy": cfg.policy, "regime": cfg.regime.value,
                       "episodes": cfg.episodes, "seed": cfg.seed},
            "metrics": {f: getattr(metrics, f)
                        for f in metrics.__dataclass_fields__},
        }, indent=2, sort_keys=True, allow_nan=True) + "\n")
        if cfg.export_traces:
            _write_traces(out_dir, cfg, records)
    return metrics


def compare(policies: list[str], cfg: EvalConfig,
            policy_files: Optional[dict[str, str]] = None,
            geom: Optional[LaneGeometry] = None,
            write_outputs: bool = True) -> list[Metrics]:
    """Evaluate several policies on the same scenario set (common seeds)."""
    policy_files = policy_files or {}
    results = []
    for name in policies:
        sub = replace(cfg, policy=name,
                      policy_file=policy_files.get(name, cfg.policy_file))
        results.append(evaluate(sub, geom, write_outputs=False))
    if write_outputs:
        out_dir = resolve_out_dir(cfg.out_dir)
        write_metrics_csv(out_dir / "metrics.csv", results)
        write_long_format(out_dir / "comparison_long.csv", results)
    return results
