"""Evaluation protocol: one-shot split, repetition runner, AEL/AER, sweeps and probes.

Agents follow a small protocol: ``control_mode`` attribute, ``reset(env, seed)``
and ``act(env, obs)`` returning an action index, a vector or a
:class:`~avtlab.dynamics.ControlCommand`. Agents may expose ``last`` (a dict of
per-step extras) and ``log_fields`` to enrich the step logs.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import dynamics as dyn
from .actions import ACTION_LABELS, ACTION_TABLE, N_ACTIONS
from .env import LOG_FIELDS, EnvConfig, TrackingEnv, step_record, write_step_log
from .scene import CATEGORIES, TargetModel

MOTION_PATTERNS = {
    "left": (-1.0, 0.0, 0.0),
    "right": (1.0, 0.0, 0.0),
    "up": (0.0, -1.0, 0.0),
    "down": (0.0, 1.0, 0.0),
    "forward": (0.0, 0.0, 1.0),
    "backward": (0.0, 0.0, -1.0),
}
PROBE_SPEED = 0.3
REPORT_FIELDS = ("category", "episodes", "ael", "aer")
EPISODE_FIELDS = ("category", "model_id", "repetition", "seed", "length", "total_reward")


# --- agents -------------------------------------------------------------------


class RandomAgent:
    """Uniform random policy: over the action table, or within the clamp box."""

    def __init__(self, control_mode: str = "position_step", seed: int = 0):
        if control_mode not in dyn.CONTROL_MODES:
            raise ValueError(f"unknown control mode {control_mode!r}")
        self.control_mode = control_mode
        self.rng = np.random.default_rng(seed)

    def reset(self, env=None, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)

    def sample(self):
        if self.control_mode == "position_step":
            return int(self.rng.integers(N_ACTIONS))
        limit = dyn.FORCE_LIMIT if self.control_mode == "force" else dyn.VELOCITY_LIMIT
        return dyn.ControlCommand(self.control_mode, self.rng.uniform(-limit, limit, size=3))

    def act(self, env=None, obs=None):
        return self.sample()


def random_agent(rng=None, mode: str = "position_step") -> RandomAgent:
    agent = RandomAgent(mode)
    if rng is not None:
        agent.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return agent


# --- split and logs -------------------------------------------------------------


def one_shot_split(catalog: Sequence[TargetModel]) -> tuple[list[TargetModel], list[TargetModel]]:
    """Partition a catalog into (train, eval) by each model's split tag."""
    train = [m for m in catalog if m.split == "train"]
    evals = [m for m in catalog if m.split == "eval"]
    if len(train) + len(evals) != len(catalog):
        raise ValueError("every model must be tagged 'train' or 'eval'")
    return train, evals


@dataclass
class EpisodeLog:
    model_id: str
    category: str
    seed: int
    repetition: int
    records: list[dict]
    decision_time: float = 0.0
    wall_time: float = 0.0

    @property
    def length(self) -> int:
        return len(self.records)

    @property
    def total_reward(self) -> float:
        return math.fsum(r["reward"] for r in self.records)

    @property
    def extra_fields(self) -> list[str]:
        seen = []
        for rec in self.records:
            for k in rec:
                if k not in LOG_FIELDS and k not in seen:
                    seen.append(k)
        return seen


def mean_exact(values) -> float:
    """Mean with a correctly rounded sum, independent of episode completion order."""
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


@dataclass
class EvalReport:
    episodes: list[EpisodeLog]
    config: dict = field(default_factory=dict)
    repetitions: int = 0

    @property
    def categories(self) -> list[str]:
        cats = {ep.category for ep in self.episodes}
        return [c for c in CATEGORIES if c in cats] + sorted(cats - set(CATEGORIES))

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def ael(self) -> float:
        return mean_exact(ep.length for ep in self.episodes)

    @property
    def aer(self) -> float:
        return mean_exact(ep.total_reward for ep in self.episodes)

    def per_category(self) -> dict:
        out = {}
        for c in self.categories:
            eps = [ep for ep in self.episodes if ep.category == c]
            out[c] = {
                "episodes": len(eps),
                "ael": mean_exact(ep.length for ep in eps),
                "aer": mean_exact(ep.total_reward for ep in eps),
            }
        return out

    def control_hz(self) -> dict:
        """Wall-clock agent decisions per second, excluding and including simulation."""
        steps = sum(max(ep.length - 1, 0) for ep in self.episodes)
        dec = sum(ep.decision_time for ep in self.episodes)
        wall = sum(ep.wall_time for ep in self.episodes)
        return {
            "decision_hz": steps / dec if dec > 0 else float("nan"),
            "inclusive_hz": steps / wall if wall > 0 else float("nan"),
        }

    def summary(self) -> dict:
        return {
            "ael": self.ael,
            "aer": self.aer,
            "n_categories": self.n_categories,
            "repetitions": self.repetitions,
            "episodes": len(self.episodes),
            "per_category": self.per_category(),
            "config": self.config,
        }


# --- episode runner -------------------------------------------------------------


def _reset_record(env: TrackingEnv) -> dict:
    r_body, _ = env.relative()
    cp = env.chaser.position
    return {
        "step": 0,
        "action": "",
        "reward": 0.0,
        "r_vis": 0.0,
        "r_dist": 0.0,
        "e": dyn.tracking_error(r_body, env.config.r_star),
        "visible": int(env.visible),
        "r_body_x": float(r_body[0]),
        "r_body_y": float(r_body[1]),
        "r_body_z": float(r_body[2]),
        "chaser_x": float(cp[0]),
        "chaser_y": float(cp[1]),
        "chaser_z": float(cp[2]),
    }


def run_episode(agent, env: TrackingEnv, seed: int, repetition: int = 0, **reset_kwargs) -> EpisodeLog:
    """Roll out one episode; the first record is the reset observation (reward 0)."""
    env.seed(seed)
    t0 = time.perf_counter()
    obs = env.reset(**reset_kwargs)
    agent.reset(env, seed=seed)
    records = [_reset_record(env)]
    decision = 0.0
    while not env.done:
        t = time.perf_counter()
        action = agent.act(env, obs)
        decision += time.perf_counter() - t
        res = env.step(action)
        rec = step_record(res, action)
        rec.update(getattr(agent, "last", None) or {})
        records.append(rec)
        obs = res.observation
    return EpisodeLog(
        env.model.id, env.model.category, int(seed), repetition, records, decision, time.perf_counter() - t0
    )


def episode_seed(base_seed: int, category_index: int, repetition: int) -> int:
    return int(np.random.SeedSequence([base_seed, category_index, repetition]).generate_state(1)[0])


def _run_job(job):
    agent, config, model, seed, rep = job
    env = TrackingEnv(config, model, seed=seed)
    return run_episode(copy.deepcopy(agent), env, seed, rep)


def evaluation_plan(models: Sequence[TargetModel], repetitions: int, base_seed: int = 0):
    """``(model, seed, repetition)`` triples: one model per category per repetition,
    surplus models of a category rotating across repetitions."""
    by_cat: dict[str, list[TargetModel]] = {}
    for m in models:
        by_cat.setdefault(m.category, []).append(m)
    order = [c for c in CATEGORIES if c in by_cat] + sorted(set(by_cat) - set(CATEGORIES))
    plan = []
    for c in order:
        ms = sorted(by_cat[c], key=lambda m: m.id)
        ci = CATEGORIES.index(c) if c in CATEGORIES else len(CATEGORIES) + order.index(c)
        for r in range(repetitions):
            plan.append((ms[r % len(ms)], episode_seed(base_seed, ci, r), r))
    return plan


def evaluate(
    agent,
    models: Sequence[TargetModel],
    repetitions: int,
    config: EnvConfig,
    base_seed: int = 0,
    jobs: int = 1,
    config_echo: dict | None = None,
) -> EvalReport:
    """Run ``repetitions`` episodes per category and aggregate AEL/AER.

    Every episode gets a fresh copy of ``agent`` and a seed derived from
    ``(base_seed, category, repetition)``, so results do not depend on ``jobs``.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if getattr(agent, "control_mode", config.control_mode) != config.control_mode:
        raise ValueError(f"agent acts in {agent.control_mode!r}, env expects {config.control_mode!r}")
    jobs_list = [(agent, config, m, seed, r) for m, seed, r in evaluation_plan(models, repetitions, base_seed)]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(_run_job, jobs_list))
    else:
        logs = [_run_job(j) for j in jobs_list]
    echo = {"env": config.to_dict(), "base_seed": base_seed, "repetitions": repetitions}
    if config_echo:
        echo.update(config_echo)
    return EvalReport(logs, echo, repetitions)


# --- studies --------------------------------------------------------------------


def default_perturbation_grid() -> list[dyn.PerturbationConfig]:
    P = dyn.PerturbationConfig
    return [
        P(actuator_noise=True),
        P(time_delay=True),
        P(blur_level=1),
        P(blur_level=2),
        P(blur_level=3),
        P(blur_level=4),
        P(actuator_noise=True, time_delay=True, blur_level=3),
    ]


def perturbation_sweep(
    agent,
    models: Sequence[TargetModel],
    repetitions: int,
    config: EnvConfig,
    grid: Sequence[dyn.PerturbationConfig] | None = None,
    base_seed: int = 0,
    jobs: int = 1,
) -> list[tuple[dyn.PerturbationConfig, EvalReport]]:
    """One report per grid cell, all sharing ``base_seed`` (matched initial states)."""
    grid = default_perturbation_grid() if grid is None else list(grid)
    return [
        (p, evaluate(agent, models, repetitions, replace(config, perturbations=p), base_seed, jobs)) for p in grid
    ]


def multi_target_study(agent, models, repetitions, config, base_seed=0, jobs=1) -> dict[str, EvalReport]:
    """Evaluate each model on its own (per-target AEL/AER)."""
    return {m.id: evaluate(agent, [m], repetitions, config, base_seed, jobs) for m in models}


def reward_ablation(
    build_agent: Callable[[str], object],
    variants: Sequence[str],
    models,
    repetitions,
    config: EnvConfig,
    base_seed=0,
    jobs=1,
) -> dict[str, EvalReport]:
    """Agents trained per reward variant, all scored under ``config``'s reward.

    ``build_agent(variant)`` trains (or loads) the agent for one variant.
    """
    return {v: evaluate(build_agent(v), models, repetitions, config, base_seed, jobs) for v in variants}


def motion_pattern_probe(
    agent,
    model: TargetModel,
    pattern: str,
    steps: int,
    config: EnvConfig | None = None,
    speed: float = PROBE_SPEED,
    seed: int = 0,
) -> np.ndarray:
    """Greedy action counts while the target moves along ``pattern`` from r*.

    The chaser is held still: chosen actions are recorded but not executed.
    """
    if pattern not in MOTION_PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {sorted(MOTION_PATTERNS)}")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    config = config or EnvConfig()
    config = replace(config, control_mode="position_step", perturbations=dyn.PerturbationConfig())
    env = TrackingEnv(config, model, seed=seed)
    r_body = np.asarray(config.r_star, dtype=float)
    vel = env.mount[:3, :3] @ (speed * np.asarray(MOTION_PATTERNS[pattern]))
    target = dyn.TargetState(r_body, vel, np.zeros(3), np.zeros(3))
    obs = env.reset(target=target)
    agent.reset(env, seed=seed)
    counts = np.zeros(N_ACTIONS, dtype=int)
    for _ in range(steps):
        counts[int(agent.act(env, obs))] += 1
        env.target = dyn.step_target(env.target, config.dt)
        env.time += config.dt
        env._observe()
        obs = env.observation
    return counts


def modal_action(counts) -> tuple[int, tuple]:
    i = int(np.argmax(counts))
    return i, tuple(int(v) for v in ACTION_TABLE[i])


# --- report files ---------------------------------------------------------------


def write_report(report: EvalReport, out_dir, logs: bool = True) -> dict[str, Path]:
    """Write report.csv, summary.json, episodes.csv, timing.json and per-episode logs.

    Everything except timing.json is a pure function of config and seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.csv",
        "summary": out / "summary.json",
        "episodes": out / "episodes.csv",
        "timing": out / "timing.json",
    }
    with open(paths["report"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for c, s in report.per_category().items():
            w.writerow([c, s["episodes"], repr(s["ael"]), repr(s["aer"])])
        w.writerow(["overall", len(report.episodes), repr(report.ael), repr(report.aer)])
    paths["summary"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    with open(paths["episodes"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EPISODE_FIELDS)
        for ep in report.episodes:
            w.writerow([ep.category, ep.model_id, ep.repetition, ep.seed, ep.length, repr(ep.total_reward)])
    paths["timing"].write_text(json.dumps(report.control_hz(), indent=2, sort_keys=True) + "\n")
    if logs:
        log_dir = out / "logs"
        log_dir.mkdir(exist_ok=True)
        for ep in report.episodes:
            write_step_log(log_dir / f"{ep.category}_{ep.repetition:03d}.csv", ep.records, ep.extra_fields)
    return paths


def reaggregate_logs(log_dir) -> tuple[float, float]:
    """AEL/AER recomputed from persisted step logs alone."""
    lengths, totals = [], []
    for path in sorted(Path(log_dir).glob("*.csv")):
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        lengths.append(len(rows))
        totals.append(math.fsum(float(r["reward"]) for r in rows))
    return mean_exact(lengths), mean_exact(totals)


def write_histogram(path, counts) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ACTION_LABELS)
        w.writerow([int(c) for c in counts])


__all__ = [
    "EpisodeLog",
    "EvalReport",
    "MOTION_PATTERNS",
    "RandomAgent",
    "default_perturbation_grid",
    "evaluate",
    "evaluation_plan",
    "modal_action",
    "motion_pattern_probe",
    "multi_target_study",
    "one_shot_split",
    "perturbation_sweep",
    "random_agent",
    "reaggregate_logs",
    "reward_ablation",
    "run_episode",
    "write_histogram",
    "write_report",
]
