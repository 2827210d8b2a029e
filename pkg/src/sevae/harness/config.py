"""JSON experiment configuration."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from sevae.datagen import GenSpec
from sevae.errors import ConfigError
from sevae.models.train import MODEL_KINDS, TrainConfig, model_config

DEFAULT_CONFIG_NAME = "default.json"

# (inactive, active) value of each ablation flag
DEFAULT_FLAGS = {"beta": [1.0, 4.0], "gamma": [0.0, 5.0], "alpha": [0.0, 10.0],
                 "anneal": [False, True]}
FLAG_NAMES = tuple(DEFAULT_FLAGS)


@dataclass
class ModelSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def build_config(self, K: int, J: int):
        return model_config(self.kind, K, J, **self.params)


@dataclass
class AblationSpec:
    sample_sizes: list = field(default_factory=lambda: [5000])
    seeds: list | None = None  # None: reuse the sweep seeds
    flags: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_FLAGS.items()})
    base: dict = field(default_factory=dict)  # fixed SevaeConfig fields


@dataclass
class MetricSpec:
    bins: int = 20
    lasso_lambda: float = 0.01
    include_nuisance: bool = True


@dataclass
class ExperimentConfig:
    generator: GenSpec = field(default_factory=GenSpec)
    train_frac: float = 0.5
    split_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    models: list = field(default_factory=list)
    sample_sizes: list = field(default_factory=lambda: [2000, 5000, 10000])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    ablation: AblationSpec = field(default_factory=AblationSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.models:
            raise ConfigError("the model grid is empty")
        if not self.sample_sizes or not self.seeds:
            raise ConfigError("sample_sizes and seeds must be non-empty")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names in {names}")
        for m in self.models:
            if m.kind not in MODEL_KINDS:
                raise ConfigError(f"model {m.name!r} has unknown kind {m.kind!r}")
            m.build_config(self.generator.K, self.generator.J)  # validates params
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        pool = self.train_pool_size
        for n in list(self.sample_sizes) + list(self.ablation.sample_sizes):
            if not 2 <= int(n) <= pool:
                raise ConfigError(
                    f"sample size {n} outside [2, {pool}] (train split of N={self.generator.N})")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        check_flags(self.ablation.flags)
        if self.metrics.bins < 2:
            raise ConfigError(f"metrics.bins must be >= 2, got {self.metrics.bins}")

    @property
    def train_pool_size(self) -> int:
        return int(round(self.train_frac * self.generator.N))

    @property
    def ablation_seeds(self) -> list:
        return list(self.ablation.seeds if self.ablation.seeds is not None else self.seeds)

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigError(f"no model named {name!r}; have {[m.name for m in self.models]}")

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "split": {"train_frac": self.train_frac, "seed": self.split_seed},
            "train": {k: v for k, v in asdict(self.train).items() if k != "seed"},
            "models": [asdict(m) for m in self.models],
            "sample_sizes": list(self.sample_sizes),
            "seeds": list(self.seeds),
            "ablation": asdict(self.ablation),
            "metrics": asdict(self.metrics),
            "output_dir": self.output_dir,
        }

    def hash(self) -> str:
        """Digest of everything that affects results (the output dir does not)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def check_flags(flags: dict) -> None:
    unknown = set(flags) - set(FLAG_NAMES)
    if unknown:
        raise ConfigError(f"unknown ablation flags {sorted(unknown)}; expected {FLAG_NAMES}")
    for name in FLAG_NAMES:
        values = flags.get(name)
        if values is None or len(values) != 2:
            raise ConfigError(f"ablation flag {name!r} needs [inactive, active] values")
        if values[0] == values[1]:
            raise ConfigError(f"ablation flag {name!r} pairs {values[0]!r} with itself")


def _section(d: dict, key: str, allowed: set) -> dict:
    sub = d.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {key!r}: {sorted(unknown)}")
    return sub


def config_from_dict(d: dict) -> ExperimentConfig:
    top = {"generator", "split", "train", "models", "sample_sizes", "seeds", "ablation",
           "metrics", "output_dir"}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    split = _section(d, "split", {"train_frac", "seed"})
    train = _section(d, "train", {"epochs", "batch_size", "lr"})
    ablation = _section(d, "ablation", {"sample_sizes", "seeds", "flags", "base"})
    metrics = _section(d, "metrics", {"bins", "lasso_lambda", "include_nuisance"})
    models = []
    for entry in d.get("models", []):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"model entries need a 'kind': {entry!r}")
        models.append(ModelSpec(entry.get("name", entry["kind"]), entry["kind"],
                                dict(entry.get("params", {}))))
    abl = AblationSpec(**ablation)
    abl.flags = {**{k: list(v) for k, v in DEFAULT_FLAGS.items()}, **abl.flags}
    try:
        return ExperimentConfig(
            generator=GenSpec.from_dict(d.get("generator", {})),
            train_frac=float(split.get("train_frac", 0.5)),
            split_seed=int(split.get("seed", 0)),
            train=TrainConfig(**train),
            models=models,
            sample_sizes=[int(n) for n in d.get("sample_sizes", [2000, 5000, 10000])],
            seeds=[int(s) for s in d.get("seeds", [0, 1, 2])],
            ablation=abl,
            metrics=MetricSpec(**metrics),
            output_dir=str(d.get("output_dir", "runs")),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def default_config_text() -> str:
    return resources.files("sevae.harness").joinpath(DEFAULT_CONFIG_NAME).read_text()


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON config.  ``None`` or a bare ``default.json`` that does not
    exist on disk resolves to the shipped default."""
    if path is None or (str(path) == DEFAULT_CONFIG_NAME and not Path(path).exists()):
        text = default_config_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(d)
