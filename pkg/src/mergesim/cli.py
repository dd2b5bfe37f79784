"""Command line entry point.

Subcommands mirror the experiment lifecycle: ``train`` a value network,
``evaluate`` one policy, ``compare`` several on a common scenario set,
``rollout`` a single traced episode, and ``gen-scenarios`` to dump a
reproducible scenario file.  ``--config`` points at a run-configuration
INI (see :mod:`mergesim.config`); ``--dump-config`` writes the defaults.
The output directory comes from ``--out-dir`` or ``$MERGESIM_OUT_DIR``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, default_run_config, load_run_config, write_run_config
from .env import ObsMode
from .evaluate import (EvalConfig, aggregate_metrics, compare, evaluate,
                       make_policy, resolve_out_dir, run_episode)
from .nn import save_policy
from .policies import POLICY_NAMES
from .scenarios import (Regime, episode_seed_sequence, sample_initial_packed,
                        sample_initial_scene, save_scenarios)
from .training import TrainConfig, TrainStage, train_dqn


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="run-configuration INI file")
    p.add_argument("--seed", type=int, default=None)


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None) is not None:
        return load_run_config(args.config)
    return default_run_config()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergesim",
        description="dense-traffic merging workbench")
    parser.add_argument("--dump-config", type=Path, metavar="PATH",
                        help="write the default run configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="train a value-network policy")
    _add_common(p)
    p.add_argument("--mode", choices=[m.value for m in ObsMode],
                   default=None, help="observation kind (default from config)")
    p.add_argument("--stage1-steps", type=int, default=None)
    p.add_argument("--stage2-steps", type=int, default=None,
                   help="0 disables the dense stage")
    p.add_argument("--target-update-episodes", type=int, default=None)
    p.add_argument("--out", type=Path, required=True,
                   help="policy file to write")
    p.add_argument("--log", type=Path, default=None,
                   help="training log CSV")
    p.add_argument("--progress", action="store_true")

    p = sub.add_parser("evaluate", help="evaluate one policy")
    _add_common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, required=True)
    p.add_argument("--policy-file", type=Path, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--regime", choices=[r.value for r in Regime], default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--traces", action="store_true",
                   help="export episode traces as JSON lines")
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("compare", help="evaluate several policies on one "
                                       "common scenario set")
    _add_common(p)
    p.add_argument("--policies", required=True,
                   help="comma-separated policy names")
    p.add_argument("--policy-files", default="",
                   help="name=path pairs, comma-separated")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--regime", choices=[r.value for r in Regime], default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("rollout", help="run one traced episode")
    _add_common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, required=True)
    p.add_argument("--policy-file", type=Path, default=None)
    p.add_argument("--regime", choices=[r.value for r in Regime], default=None)
    p.add_argument("--episode", type=int, default=0,
                   help="episode index within the seed stream")
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("gen-scenarios", help="sample initial scenes to a file")
    _add_common(p)
    p.add_argument("--regime", choices=[r.value for r in Regime], default=None)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _eval_config(args, cfg: RunConfig, policy: str) -> EvalConfig:
    regime = Regime(args.regime) if args.regime else Regime(cfg.eval.regime)
    return EvalConfig(
        policy=policy,
        regime=regime,
        episodes=args.episodes if getattr(args, "episodes", None) else cfg.eval.episodes,
        seed=args.seed if args.seed is not None else cfg.eval.seed,
        export_traces=getattr(args, "traces", False) or cfg.eval.export_traces,
        workers=args.workers if getattr(args, "workers", None) else cfg.eval.workers,
        policy_file=str(args.policy_file) if getattr(args, "policy_file", None) else None,
        mcts=cfg.mcts,
        out_dir=str(args.out_dir) if getattr(args, "out_dir", None) else None,
    )


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train = cfg.train
    if args.mode:
        train = dataclasses.replace(train, input_mode=ObsMode(args.mode))
    stages = list(train.stages)
    if args.stage1_steps is not None:
        stages[0] = TrainStage(stages[0].regime, args.stage1_steps)
    if args.stage2_steps is not None:
        if args.stage2_steps == 0:
            stages = stages[:1]
        elif len(stages) > 1:
            stages[1] = TrainStage(stages[1].regime, args.stage2_steps)
        else:
            stages.append(TrainStage(Regime.DENSE, args.stage2_steps))
    train = dataclasses.replace(train, stages=tuple(stages))
    if args.target_update_episodes is not None:
        train = dataclasses.replace(
            train, target_update_episodes=args.target_update_episodes)
    seed = args.seed if args.seed is not None else 0
    policy, log = train_dqn(train, seed=seed, geom=cfg.geometry,
                            log_path=args.log, progress=args.progress)
    save_policy(policy, args.out)
    print(f"wrote policy to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    ecfg = _eval_config(args, cfg, args.policy)
    metrics = evaluate(ecfg, geom=cfg.geometry)
    print(f"{metrics.policy}: collisions {metrics.collision_rate:.2f}% "
          f"timeouts {metrics.timeout_rate:.2f}% "
          f"mean steps {metrics.mean_steps_to_goal:.2f} "
          f"({metrics.episodes} episodes)")
    print(f"outputs in {resolve_out_dir(ecfg.out_dir)}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    files = {}
    for pair in args.policy_files.split(","):
        if pair.strip():
            name, _, path = pair.partition("=")
            files[name.strip()] = path.strip()
    ecfg = _eval_config(args, cfg, names[0])
    results = compare(names, ecfg, policy_files=files, geom=cfg.geometry)
    width = max(len(n) for n in names)
    print(f"{'policy':<{width}}  collisions%  timeouts%  mean steps")
    for m in results:
        print(f"{m.policy:<{width}}  {m.collision_rate:>10.2f}  "
              f"{m.timeout_rate:>8.2f}  {m.mean_steps_to_goal:>10.2f}")
    print(f"outputs in {resolve_out_dir(ecfg.out_dir)}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _load_config(args)
    ecfg = _eval_config(args, cfg, args.policy)
    regime_cfg = cfg.scenario_for(ecfg.regime)
    ss = episode_seed_sequence(ecfg.seed, args.episode)
    scen_ss, pol_ss = ss.spawn(2)
    ps0 = sample_initial_packed(regime_cfg, np.random.default_rng(scen_ss),
                                cfg.geometry)
    policy = make_policy(args.policy, cfg.geometry, ecfg.policy_file, cfg.mcts)
    record = run_episode(policy, ps0, np.random.default_rng(pol_ss),
                         cfg.geometry, collect_trace=True)
    out_dir = resolve_out_dir(ecfg.out_dir)
    trace_path = out_dir / f"rollout_{args.policy}_ep{args.episode}.jsonl"
    with open(trace_path, "w") as fh:
        for row in record.trace:
            fh.write(json.dumps(row) + "\n")
    metrics = aggregate_metrics(args.policy, [record])
    print(f"episode ended {record.status.value} after {record.steps} steps "
          f"(reward sum {record.reward_sum:+.0f})")
    print(f"trace written to {trace_path}")
    return 0


def cmd_gen_scenarios(args) -> int:
    cfg = _load_config(args)
    regime = Regime(args.regime) if args.regime else Regime(cfg.eval.regime)
    seed = args.seed if args.seed is not None else cfg.eval.seed
    scen_cfg = cfg.scenario_for(regime)
    scenes = []
    for i in range(args.count):
        ss = episode_seed_sequence(seed, i)
        scen_ss, _ = ss.spawn(2)
        scenes.append(sample_initial_scene(scen_cfg,
                                           np.random.default_rng(scen_ss),
                                           cfg.geometry))
    save_scenarios(args.out, scenes)
    print(f"wrote {len(scenes)} {regime.value} scenarios to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        write_run_config(default_run_config(), args.dump_config)
        print(f"wrote default configuration to {args.dump_config}")
        return 0
    handlers = {
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "compare": cmd_compare,
        "rollout": cmd_rollout,
        "gen-scenarios": cmd_gen_scenarios,
    }
    if args.command is None:
        parser.print_help()
        return 2
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
