"""Declarative run configuration loaded from YAML.

Unknown keys are rejected at every level. The raw text of the loaded file is
kept so it can be echoed verbatim into output directories.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import presets
from .dqn import QNetworkConfig, TrainerConfig
from .dynamics import PerturbationConfig
from .env import EnvConfig
from .scene import TargetModel, build_catalog

SCENARIOS = ("catalog", "sanity_sphere", "small_sphere")
# Fields fixed by other sections or by the action table.
_ENV_EXCLUDED = {"seed", "perturbations"}
_TRAINER_EXCLUDED = {"seed"}
_NETWORK_EXCLUDED = {"input_shape", "n_actions"}


class ConfigError(ValueError):
    pass


@dataclass
class EvalSettings:
    repetitions: int = 20
    base_seed: int | None = None


@dataclass
class ProbeSettings:
    steps: int = 200
    speed: float = 0.3


@dataclass
class RunConfig:
    seed: int = 0
    catalog_seed: int = 0
    scenario: str = "catalog"
    output_dir: str = "runs/default"
    env: EnvConfig = field(default_factory=EnvConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    network: dict = field(default_factory=dict)
    eval: EvalSettings = field(default_factory=EvalSettings)
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    source_text: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        self.apply_seed(self.seed)

    def apply_seed(self, seed: int):
        self.seed = int(seed)
        self.env = dataclasses.replace(self.env, seed=self.seed)
        self.trainer = dataclasses.replace(self.trainer, seed=self.seed)

    @property
    def eval_seed(self) -> int:
        return self.seed if self.eval.base_seed is None else self.eval.base_seed

    def network_config(self) -> QNetworkConfig:
        return QNetworkConfig(input_shape=self.env.obs_shape, **self.network)

    def models(self) -> tuple[list[TargetModel], list[TargetModel]]:
        """(train, eval) models for the scenario."""
        if self.scenario == "sanity_sphere":
            m = presets.sanity_model()
            return [m], [m]
        if self.scenario == "small_sphere":
            m = presets.pbvs_model()
            return [m], [m]
        from .evalkit import one_shot_split

        return one_shot_split(build_catalog(self.catalog_seed))

    def echo_text(self) -> str:
        if self.source_text is not None:
            return self.source_text
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def to_dict(self) -> dict:
        env = {k: v for k, v in self.env.to_dict().items() if k not in _ENV_EXCLUDED}
        env = {k: list(v) if isinstance(v, tuple) else v for k, v in env.items()}
        env["perturbations"] = dataclasses.asdict(self.env.perturbations)
        trainer = {k: v for k, v in self.trainer.to_dict().items() if k not in _TRAINER_EXCLUDED}
        return {
            "seed": self.seed,
            "catalog_seed": self.catalog_seed,
            "scenario": self.scenario,
            "output_dir": self.output_dir,
            "env": env,
            "trainer": trainer,
            "network": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in self.network_config().to_dict().items()
                if k not in _NETWORK_EXCLUDED
            },
            "eval": dataclasses.asdict(self.eval),
            "probe": dataclasses.asdict(self.probe),
        }


def _allowed(cls, excluded=()) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)} - set(excluded)


def _check_keys(section: str, data, allowed: set[str]):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    return data


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def config_from_dict(data: dict | None, source_text: str | None = None) -> RunConfig:
    data = _check_keys("top level", data or {}, _allowed(RunConfig, {"source_text"}))
    env_d = dict(_check_keys("env", data.get("env"), _allowed(EnvConfig, {"seed"})))
    pert = _check_keys("env.perturbations", env_d.pop("perturbations", None), _allowed(PerturbationConfig))
    trainer_d = _check_keys("trainer", data.get("trainer"), _allowed(TrainerConfig, _TRAINER_EXCLUDED))
    net_d = _check_keys("network", data.get("network"), _allowed(QNetworkConfig, _NETWORK_EXCLUDED))
    eval_d = _check_keys("eval", data.get("eval"), _allowed(EvalSettings))
    probe_d = _check_keys("probe", data.get("probe"), _allowed(ProbeSettings))
    try:
        env = EnvConfig(perturbations=PerturbationConfig(**pert), **_tuplify(env_d))
        trainer = TrainerConfig(**trainer_d)
        network = _tuplify(net_d)
        cfg = RunConfig(
            seed=int(data.get("seed", 0)),
            catalog_seed=int(data.get("catalog_seed", 0)),
            scenario=data.get("scenario", "catalog"),
            output_dir=str(data.get("output_dir", "runs/default")),
            env=env,
            trainer=trainer,
            network=network,
            eval=EvalSettings(**eval_d),
            probe=ProbeSettings(**probe_d),
            source_text=source_text,
        )
        cfg.network_config()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data, source_text=text)
