"""Run configuration: a flat INI file with one section per subsystem.

Every numeric constant of the simulator, the driver models, the filter,
the learner and the planners appears here with its default, so a single
file pins an entire experiment.  Missing keys fall back to the defaults;
unknown keys are rejected to catch typos.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .env import A_CMD_MAX, A_CMD_MIN, DT, NORM_A, NORM_S, NORM_V, TIMEOUT_S
from .mcts import MctsParams
from .scene import LaneGeometry
from .scenarios import Regime, ScenarioConfig
from .training import TrainConfig, TrainStage


@dataclass(frozen=True)
class DriverConstants:
    min_gap: float = 1.0
    time_headway: float = 0.2
    max_accel: float = 2.0
    comfort_decel: float = 2.0
    accel_exponent: float = 4.0
    hard_decel: float = 4.0
    ttm_eps_v: float = 0.1


@dataclass(frozen=True)
class EnvConstants:
    dt: float = DT
    timeout_s: float = TIMEOUT_S
    a_cmd_min: float = A_CMD_MIN
    a_cmd_max: float = A_CMD_MAX
    discount: float = 0.95
    norm_s: float = NORM_S
    norm_v: float = NORM_V
    norm_a: float = NORM_A


@dataclass(frozen=True)
class BeliefConstants:
    sigma_pos: float = 1.0
    sigma_vel: float = 1.0
    prior: float = 0.5


@dataclass(frozen=True)
class EvalDefaults:
    episodes: int = 1000
    regime: str = "dense"
    seed: int = 0
    workers: int = 1
    export_traces: bool = False


@dataclass(frozen=True)
class RunConfig:
    geometry: LaneGeometry = field(default_factory=LaneGeometry)
    driver: DriverConstants = field(default_factory=DriverConstants)
    env: EnvConstants = field(default_factory=EnvConstants)
    scenario_mixed: ScenarioConfig = field(
        default_factory=lambda: ScenarioConfig(regime=Regime.MIXED))
    scenario_dense: ScenarioConfig = field(
        default_factory=lambda: ScenarioConfig(regime=Regime.DENSE))
    belief: BeliefConstants = field(default_factory=BeliefConstants)
    train: TrainConfig = field(default_factory=TrainConfig)
    mcts: MctsParams = field(default_factory=MctsParams)
    eval: EvalDefaults = field(default_factory=EvalDefaults)

    def scenario_for(self, regime: Regime) -> ScenarioConfig:
        return (self.scenario_mixed if regime is Regime.MIXED
                else self.scenario_dense)


def default_run_config() -> RunConfig:
    return RunConfig()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _scenario_section(cfg: ScenarioConfig, prefix: str) -> dict:
    lo, hi = cfg.counts
    return {
        f"{prefix}_min_cars": lo,
        f"{prefix}_max_cars": hi,
    }


def run_config_to_ini(cfg: RunConfig) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser["geometry"] = {
        "main_lane_length": _fmt(cfg.geometry.main_lane_length),
        "merge_point_s": _fmt(cfg.geometry.merge_point_s),
        "goal_offset": _fmt(cfg.geometry.goal_offset),
        "merge_lane_length": _fmt(cfg.geometry.merge_lane_length),
        "sensor_range": _fmt(cfg.geometry.sensor_range),
    }
    parser["driver"] = {k: _fmt(getattr(cfg.driver, k))
                        for k in ("min_gap", "time_headway", "max_accel",
                                  "comfort_decel", "accel_exponent",
                                  "hard_decel", "ttm_eps_v")}
    parser["env"] = {k: _fmt(getattr(cfg.env, k))
                     for k in ("dt", "timeout_s", "a_cmd_min", "a_cmd_max",
                               "discount", "norm_s", "norm_v", "norm_a")}
    scen = cfg.scenario_mixed
    parser["scenario"] = {
        **_scenario_section(cfg.scenario_mixed, "mixed"),
        **_scenario_section(cfg.scenario_dense, "dense"),
        "v_mean": _fmt(scen.v_mean),
        "v_std": _fmt(scen.v_std),
        "v_min": _fmt(scen.v_clamp[0]),
        "v_max": _fmt(scen.v_clamp[1]),
        "v0_choices": _fmt(scen.v0_choices),
        "cooperation_min": _fmt(scen.cooperation_range[0]),
        "cooperation_max": _fmt(scen.cooperation_range[1]),
        "burn_in_min_s": _fmt(scen.burn_in_range_s[0]),
        "burn_in_max_s": _fmt(scen.burn_in_range_s[1]),
        "car_length": _fmt(scen.car_length),
        "ego_speed": _fmt(scen.ego_speed),
        "ego_length": _fmt(scen.ego_length),
    }
    parser["belief"] = {k: _fmt(getattr(cfg.belief, k))
                        for k in ("sigma_pos", "sigma_vel", "prior")}
    t = cfg.train
    parser["dqn"] = {
        "stage1_regime": t.stages[0].regime.value,
        "stage1_steps": _fmt(t.stages[0].steps),
        "stage2_regime": t.stages[1].regime.value if len(t.stages) > 1 else "",
        "stage2_steps": _fmt(t.stages[1].steps) if len(t.stages) > 1 else "",
        "input_mode": t.input_mode.value,
        "gamma": _fmt(t.gamma),
        "learning_rate": _fmt(t.learning_rate),
        "buffer_capacity": _fmt(t.buffer_capacity),
        "priority_alpha": _fmt(t.priority_alpha),
        "priority_beta": _fmt(t.priority_beta),
        "priority_floor": _fmt(t.priority_floor),
        "batch_size": _fmt(t.batch_size),
        "train_freq": _fmt(t.train_freq),
        "warmup_steps": _fmt(t.warmup_steps),
        "target_update_episodes": _fmt(t.target_update_episodes),
        "target_update_steps": _fmt(t.target_update_steps),
        "exploration_fraction": _fmt(t.exploration_fraction),
        "eps_initial": _fmt(t.eps_initial),
        "eps_final": _fmt(t.eps_final),
        "hidden": _fmt(t.hidden),
        "eval_every_steps": _fmt(t.eval_every_steps),
        "eval_episodes": _fmt(t.eval_episodes),
    }
    m = cfg.mcts
    parser["mcts"] = {
        "iterations": _fmt(m.iterations),
        "max_depth": _fmt(m.max_depth),
        "ucb_c": _fmt(m.ucb_c),
        "k_action": _fmt(m.k_action),
        "alpha_action": _fmt(m.alpha_action),
        "k_state": _fmt(m.k_state),
        "alpha_state": _fmt(m.alpha_state),
        "discount": _fmt(m.discount),
        "time_limit_s": _fmt(m.time_limit_s),
    }
    parser["eval"] = {k: _fmt(getattr(cfg.eval, k))
                      for k in ("episodes", "regime", "seed", "workers",
                                "export_traces")}
    return parser


def write_run_config(cfg: RunConfig, path: str | Path) -> None:
    parser = run_config_to_ini(cfg)
    with open(path, "w") as fh:
        parser.write(fh)


class _Section:
    """Typed reader over one INI section with known keys."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}
        self.seen: set[str] = set()

    def _get(self, key: str):
        self.seen.add(key)
        value = self.raw.get(key)
        return None if value in (None, "") else value

    def f(self, key: str, default: float) -> float:
        v = self._get(key)
        return default if v is None else float(v)

    def i(self, key: str, default: int) -> int:
        v = self._get(key)
        return default if v is None else int(v)

    def opt_f(self, key: str, default: Optional[float]) -> Optional[float]:
        v = self._get(key)
        return default if v is None else float(v)

    def opt_i(self, key: str, default: Optional[int]) -> Optional[int]:
        v = self._get(key)
        return default if v is None else int(v)

    def s(self, key: str, default: str) -> str:
        v = self._get(key)
        return default if v is None else v

    def b(self, key: str, default: bool) -> bool:
        v = self._get(key)
        if v is None:
            return default
        return v.strip().lower() in ("1", "true", "yes", "on")

    def floats(self, key: str, default: tuple) -> tuple:
        v = self._get(key)
        if v is None:
            return default
        return tuple(float(x) for x in v.split(",") if x.strip())

    def ints(self, key: str, default: tuple) -> tuple:
        v = self._get(key)
        if v is None:
            return default
        return tuple(int(x) for x in v.split(",") if x.strip())

    def check_unknown(self) -> None:
        unknown = set(self.raw) - self.seen
        if unknown:
            raise ValueError(f"unknown keys in [{self.name}]: "
                             f"{sorted(unknown)}")


def load_run_config(path: str | Path) -> RunConfig:
    """Read a run configuration, filling missing keys with the defaults."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    base = RunConfig()

    g = _Section(parser, "geometry")
    geometry = LaneGeometry(
        g.f("main_lane_length", base.geometry.main_lane_length),
        g.f("merge_point_s", base.geometry.merge_point_s),
        g.f("goal_offset", base.geometry.goal_offset),
        g.f("merge_lane_length", base.geometry.merge_lane_length),
        g.f("sensor_range", base.geometry.sensor_range),
    )

    d = _Section(parser, "driver")
    driver = DriverConstants(
        d.f("min_gap", base.driver.min_gap),
        d.f("time_headway", base.driver.time_headway),
        d.f("max_accel", base.driver.max_accel),
        d.f("comfort_decel", base.driver.comfort_decel),
        d.f("accel_exponent", base.driver.accel_exponent),
        d.f("hard_decel", base.driver.hard_decel),
        d.f("ttm_eps_v", base.driver.ttm_eps_v),
    )

    e = _Section(parser, "env")
    envc = EnvConstants(
        e.f("dt", base.env.dt), e.f("timeout_s", base.env.timeout_s),
        e.f("a_cmd_min", base.env.a_cmd_min),
        e.f("a_cmd_max", base.env.a_cmd_max),
        e.f("discount", base.env.discount), e.f("norm_s", base.env.norm_s),
        e.f("norm_v", base.env.norm_v), e.f("norm_a", base.env.norm_a),
    )

    s = _Section(parser, "scenario")
    common = dict(
        v_mean=s.f("v_mean", 5.0), v_std=s.f("v_std", 1.0),
        v_clamp=(s.f("v_min", 0.0), s.f("v_max", 10.0)),
        v0_choices=s.floats("v0_choices", (4.0, 5.0, 6.0)),
        cooperation_range=(s.f("cooperation_min", 0.0),
                           s.f("cooperation_max", 1.0)),
        burn_in_range_s=(s.f("burn_in_min_s", 10.0),
                         s.f("burn_in_max_s", 20.0)),
        car_length=s.f("car_length", 4.0),
        ego_speed=s.f("ego_speed", 5.0), ego_length=s.f("ego_length", 4.0),
        min_gap=driver.min_gap, time_headway=driver.time_headway,
        max_accel=driver.max_accel, comfort_decel=driver.comfort_decel,
        accel_exponent=driver.accel_exponent,
    )
    scenario_mixed = ScenarioConfig(
        regime=Regime.MIXED,
        car_count_range=(s.i("mixed_min_cars", 5), s.i("mixed_max_cars", 12)),
        **common)
    scenario_dense = ScenarioConfig(
        regime=Regime.DENSE,
        car_count_range=(s.i("dense_min_cars", 10), s.i("dense_max_cars", 14)),
        **common)

    b = _Section(parser, "belief")
    belief = BeliefConstants(b.f("sigma_pos", 1.0), b.f("sigma_vel", 1.0),
                             b.f("prior", 0.5))

    t = _Section(parser, "dqn")
    from .env import ObsMode
    stages = [TrainStage(Regime(t.s("stage1_regime", "mixed")),
                         t.i("stage1_steps", 1_500_000))]
    stage2_steps = t.opt_i("stage2_steps", 1_500_000)
    stage2_regime = t.s("stage2_regime", "dense")
    if stage2_steps and stage2_regime:
        stages.append(TrainStage(Regime(stage2_regime), stage2_steps))
    train = TrainConfig(
        stages=tuple(stages),
        input_mode=ObsMode(t.s("input_mode", "base")),
        gamma=t.f("gamma", 0.95),
        learning_rate=t.f("learning_rate", 1e-4),
        buffer_capacity=t.i("buffer_capacity", 400_000),
        priority_alpha=t.f("priority_alpha", 0.7),
        priority_beta=t.f("priority_beta", 1e-3),
        priority_floor=t.f("priority_floor", 1e-6),
        batch_size=t.i("batch_size", 32),
        train_freq=t.i("train_freq", 4),
        warmup_steps=t.i("warmup_steps", 1_000),
        target_update_episodes=t.i("target_update_episodes", 5_000),
        target_update_steps=t.opt_i("target_update_steps", None),
        exploration_fraction=t.f("exploration_fraction", 0.5),
        eps_initial=t.f("eps_initial", 1.0),
        eps_final=t.f("eps_final", 0.01),
        hidden=t.ints("hidden", (64, 32)),
        eval_every_steps=t.i("eval_every_steps", 25_000),
        eval_episodes=t.i("eval_episodes", 50),
        dt=envc.dt,
    )

    m = _Section(parser, "mcts")
    mcts = MctsParams(
        iterations=m.i("iterations", 10_000),
        max_depth=m.i("max_depth", 20),
        ucb_c=m.f("ucb_c", 1.0),
        k_action=m.f("k_action", 7.0),
        alpha_action=m.f("alpha_action", 0.5),
        k_state=m.f("k_state", 1.0),
        alpha_state=m.f("alpha_state", 0.1),
        discount=m.f("discount", 0.95),
        time_limit_s=m.opt_f("time_limit_s", None),
    )

    v = _Section(parser, "eval")
    eval_defaults = EvalDefaults(
        episodes=v.i("episodes", 1000), regime=v.s("regime", "dense"),
        seed=v.i("seed", 0), workers=v.i("workers", 1),
        export_traces=v.b("export_traces", False),
    )

    for section in (g, d, e, s, b, t, m, v):
        section.check_unknown()

    return RunConfig(geometry, driver, envc, scenario_mixed, scenario_dense,
                     belief, train, mcts, eval_defaults)
