"""Command-line entry point: ``avtlab {train,eval,probe,render,sweep}``.

Every command writes into an output directory (``--out`` or the config's
``output_dir``), echoes the config there, prints a comma-separated summary on
stdout and renders figures next to it. Diagnostics go to stderr, and only when
the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit, plotting
from .config import ConfigError, RunConfig, load_config
from .dqn import CheckpointError, DqnAgent, QNetworkConfig, load_checkpoint, train
from .env import EnvConfig, TrackingEnv
from .pbvs import PbvsAgent
from .scene import build_catalog, euler_to_matrix, find_model, render, write_depth, write_ppm
from . import presets

MARKER = ".avtlab-run"
AGENT_NAMES = ("pbvs", "pbvs-oracle", "random")

class CliError(Exception):
    pass


# --- helpers --------------------------------------------------------------------


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    return cfg


def _prepare_out(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    if out.exists() and any(out.iterdir()):
        if not args.overwrite:
            raise CliError(f"output directory {out} is not empty (use --overwrite)")
        if not (out / MARKER).exists():
            raise CliError(f"refusing to overwrite {out}: not an avtlab output directory")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / MARKER).write_text("")
    (out / "config.yaml").write_text(cfg.echo_text())
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.INFO)
    logging.captureWarnings(True)
    return out


def _emit(rows, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())


def _all_models(cfg: RunConfig):
    return build_catalog(cfg.catalog_seed) + [presets.sanity_model(), presets.pbvs_model()]


def _jobs(args) -> int:
    return max(1, args.jobs if args.jobs is not None else (os.cpu_count() or 1))


def _make_agent(name: str, cfg: RunConfig, explicit_config: bool):
    """Return ``(agent, env_config)`` for an agent string or checkpoint path."""
    env = cfg.env
    if name in ("pbvs", "pbvs-oracle"):
        mode = env.control_mode if env.control_mode in ("force", "velocity") else "velocity"
        return PbvsAgent(mode, oracle=name == "pbvs-oracle"), replace(env, control_mode=mode)
    if name == "random":
        return evalkit.RandomAgent(env.control_mode, seed=cfg.seed), env
    path = Path(name)
    if not path.is_file():
        raise CliError(f"unknown agent {name!r}: expected a checkpoint file or one of {', '.join(AGENT_NAMES)}")
    params, ck_cfg, _ = load_checkpoint(path)
    network = QNetworkConfig(**ck_cfg["network"])
    if not explicit_config and "env" in ck_cfg:
        env = replace(EnvConfig(**ck_cfg["env"]), seed=cfg.seed)
        cfg.scenario = ck_cfg.get("scenario", cfg.scenario)
    env = replace(env, control_mode="position_step")
    if tuple(env.obs_shape) != tuple(network.input_shape):
        raise CliError(f"observation shape {env.obs_shape} does not match network input {network.input_shape}")
    return DqnAgent(params, network), env


def _checkpoint_env(path, cfg: RunConfig, explicit_config: bool) -> tuple[DqnAgent, EnvConfig]:
    agent, env = _make_agent(str(path), cfg, explicit_config)
    if not isinstance(agent, DqnAgent):
        raise CliError("a checkpoint path is required")
    return agent, env


# --- commands -------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _prepare_out(args, cfg)
    train_models, _ = cfg.models()
    network = cfg.network_config()
    env_cfg = replace(cfg.env, control_mode="position_step")

    def factory(model, seed):
        return TrackingEnv(env_cfg, model, seed=seed)

    result = train(
        factory,
        cfg.trainer,
        network,
        train_models,
        checkpoint_path=out / "checkpoint.bin",
        curves_path=out / "curves.csv",
        extra_config={"env": env_cfg.to_dict(), "scenario": cfg.scenario},
    )
    plotting.plot_training_curves(result.curves, out / "training_curves.png")
    c = result.curves
    _emit(
        [
            ["episodes", len(c)],
            ["env_steps", result.env_steps],
            ["gradient_steps", result.gradient_steps],
            ["final_length", c[-1].length if c else ""],
            ["final_reward", repr(c[-1].total_reward) if c else ""],
            ["checkpoint", out / "checkpoint.bin"],
        ],
        ["metric", "value"],
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    agent, env = _make_agent(args.agent, cfg, args.config is not None)
    out = _prepare_out(args, cfg)
    _, eval_models = cfg.models()
    report = evalkit.evaluate(
        agent, eval_models, cfg.eval.repetitions, env, cfg.eval_seed, _jobs(args), {"agent": args.agent}
    )
    evalkit.write_report(report, out)
    plotting.plot_eval_report(report, out / "eval.png", title=args.agent)
    if report.episodes:
        plotting.plot_trajectory(report.episodes[0].records, out / "trajectory.png")
    rows = [[c, s["episodes"], repr(s["ael"]), repr(s["aer"])] for c, s in report.per_category().items()]
    rows.append(["overall", len(report.episodes), repr(report.ael), repr(report.aer)])
    _emit(rows, evalkit.REPORT_FIELDS)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    agent, env = _make_agent(args.agent, cfg, args.config is not None)
    out = _prepare_out(args, cfg)
    _, eval_models = cfg.models()
    grid = [evalkit.dyn.PerturbationConfig()] + evalkit.default_perturbation_grid()
    table = evalkit.perturbation_sweep(agent, eval_models, cfg.eval.repetitions, env, grid, cfg.eval_seed, _jobs(args))
    rows = []
    for p, rep in table:
        evalkit.write_report(rep, out / p.label, logs=False)
        rows.append([p.label, int(p.actuator_noise), int(p.time_delay), p.blur_level, repr(rep.ael), repr(rep.aer)])
    header = ("perturbation", "actuator_noise", "time_delay", "blur_level", "ael", "aer")
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    plotting.plot_sweep([(p.label, rep) for p, rep in table], out / "sweep.png")
    _emit(rows, header)
    return 0


def cmd_probe(args) -> int:
    cfg = _load(args)
    if args.pattern not in evalkit.MOTION_PATTERNS:
        raise CliError(f"unknown pattern {args.pattern!r}; expected one of {', '.join(evalkit.MOTION_PATTERNS)}")
    agent, env = _checkpoint_env(args.checkpoint, cfg, args.config is not None)
    out = _prepare_out(args, cfg)
    _, eval_models = cfg.models()
    model = find_model(_all_models(cfg), args.model) if args.model else eval_models[0]
    steps = args.steps if args.steps is not None else cfg.probe.steps
    counts = evalkit.motion_pattern_probe(agent, model, args.pattern, steps, env, cfg.probe.speed, cfg.seed)
    evalkit.write_histogram(out / "histogram.csv", counts)
    plotting.plot_histogram(counts, out / "histogram.png", title=f"{args.pattern} ({model.id})")
    _emit([[int(c) for c in counts]], evalkit.ACTION_LABELS)
    return 0


def cmd_render(args) -> int:
    cfg = _load(args)
    try:
        model = find_model(_all_models(cfg), args.model)
    except KeyError as exc:
        raise CliError(exc.args[0]) from exc
    out = _prepare_out(args, cfg)
    intr = cfg.env.intrinsics()
    frame = render(intr, model, np.asarray(args.pose, dtype=float), euler_to_matrix(args.euler),
                   light=cfg.env.light, z_max=cfg.env.z_max)
    write_ppm(out / f"{model.id}.ppm", frame.color)
    write_depth(out / f"{model.id}.depth.f32", frame.depth)
    hit = int(np.count_nonzero(frame.depth < cfg.env.z_max))
    _emit(
        [["color", out / f"{model.id}.ppm"], ["depth", out / f"{model.id}.depth.f32"],
         ["width", intr.width], ["height", intr.height], ["hit_pixels", hit]],
        ["item", "value"],
    )
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration (defaults apply when omitted)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, help="parallel evaluation workers (default: logical cores)")
    common.add_argument("--overwrite", action="store_true", help="replace an existing output directory")

    p = argparse.ArgumentParser(prog="avtlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", parents=[common], help="train a DQN tracker")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate an agent")
    s.add_argument("agent", help="checkpoint path, or one of: " + ", ".join(AGENT_NAMES))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="evaluate an agent under each perturbation")
    s.add_argument("agent", help="checkpoint path, or one of: " + ", ".join(AGENT_NAMES))
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("probe", parents=[common], help="action histogram for a target motion pattern")
    s.add_argument("checkpoint")
    s.add_argument("--pattern", required=True, help=", ".join(evalkit.MOTION_PATTERNS))
    s.add_argument("--steps", type=int)
    s.add_argument("--model", help="target model id (default: first eval model)")
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("render", parents=[common], help="render one color image and depth dump")
    s.add_argument("model")
    s.add_argument("--pose", type=float, nargs=3, default=(0.0, 0.0, 5.0), metavar=("X", "Y", "Z"))
    s.add_argument("--euler", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("RX", "RY", "RZ"))
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    # nothing reaches stderr unless the command fails
    root.handlers = [logging.NullHandler()]
    try:
        return args.func(args)
    except (CliError, ConfigError, CheckpointError) as exc:
        print(f"avtlab: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"avtlab: error: {exc}", file=sys.stderr)
        return 1
    finally:
        for h in root.handlers:
            h.close()
        root.handlers, _ = saved
        root.setLevel(saved[1])
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
