"""Pipeline configuration: nested dataclasses loaded from and rendered to YAML.

Every constant of the method is a default, so a minimal document only names
the input files. Relative file paths resolve against the config file's
directory.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

MODEL_KINDS = ("dap", "dap-noembed", "dnn", "logreg")


def _positive(path, **values):
    for name, v in values.items():
        if v is None or not v > 0:
            raise ConfigError(f"{path}.{name}" if path else name, f"must be positive, got {v!r}")


@dataclass
class GridConfig:
    """Grid anchor (south-west corner) and size; zero rows/cols means "cover the events"."""

    anchor_lat: float | None = None
    anchor_lng: float | None = None
    rows: int = 0
    cols: int = 0
    cell_size: float = 5000.0

    def __post_init__(self):
        _positive("", cell_size=self.cell_size)
        if self.rows < 0 or self.cols < 0:
            raise ConfigError("rows" if self.rows < 0 else "cols", "must not be negative")
        if (self.anchor_lat is None) != (self.anchor_lng is None):
            raise ConfigError("anchor_lat", "anchor needs both latitude and longitude")
        if self.anchor_lat is not None and not (self.rows and self.cols):
            raise ConfigError("rows", "an explicit anchor needs rows and cols")


@dataclass
class FilesConfig:
    events: str = "events.csv"
    weather: str = "weather.csv"
    poi: str = "poi.csv"
    word_vectors: str = "vectors.txt"
    patterns: str | None = None
    history: str | None = None
    events_format: str = "csv"

    def __post_init__(self):
        if self.events_format not in ("csv", "jsonl"):
            raise ConfigError("events_format", "must be csv or jsonl")


@dataclass
class DedupConfig:
    distance_m: float = 250.0
    minutes: float = 10.0

    def __post_init__(self):
        _positive("", distance_m=self.distance_m, minutes=self.minutes)


@dataclass
class ThresholdConfig:
    """POI association radii; ``calibrate`` replaces the two family radii by calibration."""

    calibrate: bool = False
    intersection: float = 30.0
    junction: float = 100.0

    def __post_init__(self):
        _positive("", intersection=self.intersection, junction=self.junction)


@dataclass
class SplitConfig:
    train_weeks: float = 10.0
    test_weeks: float = 2.0
    val_fraction: float = 0.1

    def __post_init__(self):
        _positive("", train_weeks=self.train_weeks, test_weeks=self.test_weeks)
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction", "must lie in [0, 1)")


@dataclass
class ModelConfig:
    kind: str = "dap"
    embedding_dim: int = 128
    lstm_layers: int = 2
    lstm_hidden: int = 128
    branch_dense: int = 128
    head_sizes: tuple = (512, 256, 64, 2)
    dnn_hidden: tuple = (512, 256, 64)
    penalty: str | None = None
    lam: float = 0.0

    def __post_init__(self):
        self.head_sizes = tuple(int(v) for v in self.head_sizes)
        self.dnn_hidden = tuple(int(v) for v in self.dnn_hidden)
        if self.kind not in MODEL_KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(MODEL_KINDS)}")
        _positive("", embedding_dim=self.embedding_dim, lstm_layers=self.lstm_layers,
                  lstm_hidden=self.lstm_hidden, branch_dense=self.branch_dense)
        if len(self.head_sizes) != 4 or self.head_sizes[-1] != 2 or min(self.head_sizes) <= 0:
            raise ConfigError("head_sizes", "four positive sizes ending in 2")
        if len(self.dnn_hidden) != 3 or min(self.dnn_hidden) <= 0:
            raise ConfigError("dnn_hidden", "three positive hidden sizes")
        if self.penalty not in (None, "l1", "l2"):
            raise ConfigError("penalty", "must be l1, l2 or null")
        if self.lam < 0:
            raise ConfigError("lam", "must not be negative")

    def options(self) -> dict:
        """Keyword options for :func:`accrisk.models.build_model`."""
        if self.kind in ("dap", "dap-noembed"):
            return {"embedding_dim": self.embedding_dim, "lstm_layers": self.lstm_layers,
                    "lstm_hidden": self.lstm_hidden, "branch_dense": self.branch_dense,
                    "head_sizes": self.head_sizes}
        if self.kind == "dnn":
            return {"hidden": self.dnn_hidden}
        return {"penalty": self.penalty, "lam": self.lam}


@dataclass
class TrainingConfig:
    epochs: int = 60
    patience: int = 10
    lr: float = 0.01
    batch: int = 64

    def __post_init__(self):
        _positive("", epochs=self.epochs, lr=self.lr, batch=self.batch)
        if self.patience < 0 or self.patience >= self.epochs:
            raise ConfigError("patience", "must lie in [0, epochs)")


@dataclass
class AblationConfig:
    model: ModelConfig = field(default_factory=lambda: ModelConfig(kind="dap-noembed"))
    scenarios: tuple = ("only-one", "all-but-one")
    categories: tuple = ("traffic", "time", "weather", "poi", "desc2vec")

    def __post_init__(self):
        from .featurize import CATEGORIES

        self.scenarios = tuple(self.scenarios)
        self.categories = tuple(self.categories)
        bad = [s for s in self.scenarios if s not in ("only-one", "all-but-one")]
        if bad:
            raise ConfigError("scenarios", f"unknown scenario {bad[0]!r}")
        bad = [c for c in self.categories if c not in CATEGORIES]
        if bad:
            raise ConfigError("categories", f"unknown category {bad[0]!r}")


@dataclass
class PipelineConfig:
    city: str = "city"
    start: str | None = None
    utc_offset: float = 0.0
    interval_minutes: int = 15
    window: int = 8
    sampling_probability: float = 0.02
    seeds: tuple = (0, 1, 2)
    grid: GridConfig = field(default_factory=GridConfig)
    files: FilesConfig = field(default_factory=FilesConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed")
        if self.interval_minutes != 15:
            raise ConfigError("interval_minutes", "only 15-minute intervals are supported")
        if self.window != 8:
            raise ConfigError("window", "only 8-interval windows are supported")
        if not 0 < self.sampling_probability <= 1:
            raise ConfigError("sampling_probability", "must lie in (0, 1]")
        if self.start is not None:
            from .ingest import parse_time

            try:
                parse_time(self.start)
            except ValueError as exc:
                raise ConfigError("start", str(exc)) from None

    def path(self, name: str) -> Path | None:
        """Absolute path of a ``files`` entry (``None`` when unset)."""
        value = getattr(self.files, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def train_config(self, seeds=None, model_training: TrainingConfig | None = None):
        from .models import TrainConfig

        t = model_training or self.training
        return TrainConfig(epochs=t.epochs, early_stopping_patience=t.patience, lr=t.lr,
                           batch=t.batch, seeds=tuple(seeds or self.seeds),
                           val_fraction=self.split.val_fraction)


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, sub)
        else:
            kwargs[name] = _coerce(tp, value, sub)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc.field}" if path else exc.field, exc.reason) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(path or "<root>", str(exc)) from None


def _coerce(tp, value, path):
    args = typing.get_args(tp)
    optional = type(None) in args
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "must not be null")
    base = next((a for a in args if a is not type(None)), tp) if args else tp
    if base is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        return tuple(value)
    if base is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if base in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if base is int and int(value) != value:
            raise ConfigError(path, "expected an integer")
        return base(value)
    if base is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


def parse(text: str, base_dir=".") -> PipelineConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    cfg = _build(PipelineConfig, data, "")
    cfg.base_dir = str(base_dir)
    return cfg


def load(path) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"no such file {p}")
    return parse(p.read_text(), p.parent)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.name != "base_dir"}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def render(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(_plain(cfg), sort_keys=False, default_flow_style=None)
