"""Pipeline configuration: one JSON file, every field overridable as ``--section.field``."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .corpus import TokenizerConfig
from .embedding import CbowConfig
from .errors import ConfigError
from .lexicon import NamingConfig
from .training import TrainConfig


@dataclass
class PathsConfig:
    inputs: list[str] = field(default_factory=list)
    workdir: str = "work"
    gold: str | None = None


@dataclass
class ClusteringConfig:
    k: int = 15
    max_iter: int = 100
    tol: float = 1e-4
    n_init: int = 10
    frequency_floor: int = 20
    allowed_tokens_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"clustering.k must be >= 2, got {self.k}")
        if self.max_iter < 1:
            raise ConfigError("clustering.max_iter must be >= 1")
        if self.n_init < 1:
            raise ConfigError("clustering.n_init must be >= 1")


@dataclass
class AspectConfig:
    heads: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.heads < 1:
            raise ConfigError("aspect.heads must be >= 1")


@dataclass
class LexiconConfig:
    top_n: int = 150
    labeling_mode: str = "lexicon"   # or "model"
    tau: float = 0.2
    sweep: list[int] = field(default_factory=lambda: [50, 100, 150, 200, 250])

    def __post_init__(self):
        if self.top_n < 1:
            raise ConfigError("lexicon.top_n must be >= 1")
        if self.labeling_mode not in ("lexicon", "model"):
            raise ConfigError(f"lexicon.labeling_mode must be 'lexicon' or 'model', got {self.labeling_mode!r}")


@dataclass
class MetricsConfig:
    top_n: int = 20
    window: int = 10
    epsilon: float = 1.0
    epsilon_mode: str = "count"      # or "prob"
    doc_unit: str = "review"         # or "sentence"

    def __post_init__(self):
        if self.epsilon_mode not in ("count", "prob"):
            raise ConfigError(f"metrics.epsilon_mode must be 'count' or 'prob', got {self.epsilon_mode!r}")
        if self.doc_unit not in ("review", "sentence"):
            raise ConfigError(f"metrics.doc_unit must be 'review' or 'sentence', got {self.doc_unit!r}")
        if self.window < 1 or self.top_n < 2:
            raise ConfigError("metrics.window must be >= 1 and metrics.top_n >= 2")


SECTIONS = {
    "paths": PathsConfig,
    "corpus": TokenizerConfig,
    "cbow": CbowConfig,
    "clustering": ClusteringConfig,
    "aspect": AspectConfig,
    "train": TrainConfig,
    "lexicon": LexiconConfig,
    "metrics": MetricsConfig,
    "naming": NamingConfig,
}
SEEDED = ("cbow", "clustering", "aspect", "train")


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: TokenizerConfig = field(default_factory=TokenizerConfig)
    cbow: CbowConfig = field(default_factory=CbowConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    aspect: AspectConfig = field(default_factory=AspectConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    lexicon: LexiconConfig = field(default_factory=LexiconConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    naming: NamingConfig = field(default_factory=NamingConfig)
    seed: int = 0
    threads: int = 1

    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            out[name] = {k: sorted(v) if isinstance(v, frozenset) else v for k, v in section.items()}
        out["seed"] = self.seed
        out["threads"] = self.threads
        return out

    def get(self, dotted: str) -> Any:
        obj: Any = self.to_dict()
        for part in dotted.split("."):
            obj = obj[part]
        return obj

    def hash_of(self, keys: list[str]) -> str:
        blob = json.dumps({k: self.get(k) for k in keys}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate_paths(self) -> None:
        for p in self.paths.inputs:
            if not Path(p).is_file():
                raise ConfigError(f"input file not found: {p}")
        for p in (self.corpus.stopwords_path, self.clustering.allowed_tokens_path, self.paths.gold,
                  self.naming.mapping_path):
            if p and not Path(p).is_file():
                raise ConfigError(f"configured file not found: {p}")


def field_types(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _coerce(value: Any, tp: Any, name: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or type(tp).__name__ == "UnionType":
        if value is None or (isinstance(value, str) and value.lower() in ("", "none", "null")):
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], name)
    if origin in (list, frozenset):
        item = args[0] if args else str
        if isinstance(value, str):
            value = [v for v in value.split(",") if v != ""]
        items = [_coerce(v, item, name) for v in value]
        return frozenset(items) if origin is frozenset else items
    if tp is bool:
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return bool(value)
    if tp in (int, float, str):
        try:
            return tp(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: expected {tp.__name__}, got {value!r}") from exc
    return value


def build_config(raw: dict | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Assemble a validated config from a parsed JSON dict plus dotted overrides."""
    raw = json.loads(json.dumps(raw or {}))
    for dotted, value in (overrides or {}).items():
        parts = dotted.split(".")
        target = raw
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = value

    unknown = set(raw) - set(SECTIONS) - {"seed", "threads"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    seed = _coerce(raw.get("seed", 0), int, "seed")
    threads = _coerce(raw.get("threads", 0), int, "threads")
    if threads < 1:
        threads = os.cpu_count() or 1
    kwargs = {}
    for name, cls in SECTIONS.items():
        section = dict(raw.get(name, {}))
        types = field_types(cls)
        bad = set(section) - set(types)
        if bad:
            raise ConfigError(f"unknown fields in {name}: {sorted(bad)}")
        values = {k: _coerce(v, types[k], f"{name}.{k}") for k, v in section.items()}
        # the global seed fills every stage seed not pinned explicitly
        if name in SEEDED and "seed" not in values:
            values["seed"] = seed
        try:
            kwargs[name] = cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return PipelineConfig(**kwargs, seed=seed, threads=threads)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return build_config(raw, overrides)


def all_dotted_fields() -> dict[str, Any]:
    out = {}
    for name, cls in SECTIONS.items():
        for fname, tp in field_types(cls).items():
            out[f"{name}.{fname}"] = tp
    return out
