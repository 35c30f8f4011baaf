"""Run configuration.

Section and key names follow the hyperparameter table of the method; every
default is the value used there unless noted. Unknown keys are rejected with
the full dotted key name so a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import yaml

ALGORITHMS = ("egrl", "ea", "pg", "greedy_dp")


class ConfigError(ValueError):
    pass


@dataclass
class WorkloadSection:
    kind: str = "resnet_like"
    n_nodes: int = 57
    seed: int = 0
    path: str | None = None


@dataclass
class GnnSection:
    hidden_layer_size: int = 128
    output_layer_size: int = 128
    depth: int = 4
    attention_heads: int = 4


@dataclass
class EnvironmentSection:
    total_steps: int = 4000
    steps_per_episode: int = 1
    initial_mapping_action: str = "DRAM"
    invalid_penalty: float = 1.0


@dataclass
class EaSection:
    population_size: int = 20
    boltzmann_fraction: float = 0.2
    # None -> max(1, ceil(0.1 * population_size))
    elites: int | None = None
    tournament_size: int = 3
    mutation_prob: float = 0.9
    gnn_mutation_sigma: float = 0.1
    boltzmann_mutation_sigma: float = 0.3
    seed_one_hot: bool = False
    # initial Boltzmann priors: N(0, scale) plus a bias on DRAM
    boltzmann_prior_scale: float = 1.0
    boltzmann_dram_bias: float = 0.0


@dataclass
class PgSection:
    rollout_size: int = 1
    replay_buffer_size: int = 100_000
    critic_lr: float = 1e-3
    actor_lr: float = 1e-3
    alpha: float = 0.05
    tau: float = 1e-3
    batch_size: int = 24
    reward_scaling: float = 5.0
    gradient_steps_per_env_step: int = 1
    discount: float = 0.99
    noise_sigma: float = 0.1
    noise_clip: float = 0.3


@dataclass
class EgrlSection:
    migration_every: int = 1
    reseed_every: int = 10


@dataclass
class GreedyDpSection:
    passes: int = 3


@dataclass
class RunConfig:
    algorithm: str = "egrl"
    seed: int = 0
    n_seeds: int = 1
    hardware: object = "desk"
    workload: WorkloadSection = field(default_factory=WorkloadSection)
    gnn: GnnSection = field(default_factory=GnnSection)
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    ea: EaSection = field(default_factory=EaSection)
    pg: PgSection = field(default_factory=PgSection)
    egrl: EgrlSection = field(default_factory=EgrlSection)
    greedy_dp: GreedyDpSection = field(default_factory=GreedyDpSection)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds: must be >= 1")
        if self.environment.steps_per_episode != 1:
            raise ConfigError("environment.steps_per_episode: only 1-step episodes are supported")
        if self.environment.initial_mapping_action != "DRAM":
            raise ConfigError("environment.initial_mapping_action: only 'DRAM' is supported")
        if self.environment.total_steps < 1:
            raise ConfigError("environment.total_steps: must be >= 1")
        if self.gnn.output_layer_size != self.gnn.hidden_layer_size:
            raise ConfigError("gnn.output_layer_size: must equal gnn.hidden_layer_size (residual stack)")
        if self.ea.population_size < 1:
            raise ConfigError("ea.population_size: must be >= 1")
        if not 0.0 <= self.ea.boltzmann_fraction <= 1.0:
            raise ConfigError("ea.boltzmann_fraction: must lie in [0, 1]")
        if self.ea.elites is not None and not 1 <= self.ea.elites <= self.ea.population_size:
            raise ConfigError("ea.elites: must lie in [1, population_size]")
        if self.pg.gradient_steps_per_env_step < 0:
            raise ConfigError("pg.gradient_steps_per_env_step: must be >= 0")
        if self.pg.batch_size < 1:
            raise ConfigError("pg.batch_size: must be >= 1")
        if self.algorithm == "pg" and self.pg.rollout_size < 1:
            raise ConfigError("pg.rollout_size: pure PG needs at least one rollout per step")

    @property
    def n_elites(self) -> int:
        if self.ea.elites is not None:
            return self.ea.elites
        return max(1, -(-self.ea.population_size // 10))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return _build(cls, doc or {}, "")

    @classmethod
    def load(cls, path) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                doc = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("config root must be a mapping")
        cfg = cls.from_dict(doc or {})
        # relative workload/hardware paths resolve against the config file
        base = os.path.dirname(os.path.abspath(path))
        if cfg.workload.path and not os.path.isabs(cfg.workload.path):
            cfg.workload.path = os.path.join(base, cfg.workload.path)
        if isinstance(cfg.hardware, dict) and "path" in cfg.hardware and not os.path.isabs(cfg.hardware["path"]):
            cfg.hardware["path"] = os.path.join(base, cfg.hardware["path"])
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _build(cls, doc, prefix):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping, got {type(doc).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in fields:
            raise ConfigError(f"unknown config key {prefix + str(key)!r}")
    kwargs = {}
    for name, f in fields.items():
        if name not in doc:
            continue
        value = doc[name]
        sub = _SECTIONS.get(name) if cls is RunConfig else None
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(value, f, prefix + name)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from None


def _coerce(value, f, key):
    default = f.default if f.default is not dataclasses.MISSING else None
    if value is None or default is None or isinstance(default, (str, dict, list)) and not isinstance(value, type(default)):
        if isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return value


_SECTIONS = {
    "workload": WorkloadSection,
    "gnn": GnnSection,
    "environment": EnvironmentSection,
    "ea": EaSection,
    "pg": PgSection,
    "egrl": EgrlSection,
    "greedy_dp": GreedyDpSection,
}


def desk_config(**overrides) -> RunConfig:
    """Defaults scaled for a laptop: desk hardware and a 32-wide, 2-deep, 2-head GNN."""
    cfg = RunConfig(gnn=GnnSection(hidden_layer_size=32, output_layer_size=32, depth=2, attention_heads=2))
    for key, value in overrides.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
