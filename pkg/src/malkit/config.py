"""Experiment configuration: a flat key=value schema shared by the config
file parser, CLI overrides, and the training loops."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

STRATEGIES = ("mal", "random", "entropy", "kcenter")
ENTROPY_SIGNS = ("clf_max", "enc_max")
MAL_SELECTIONS = ("ranksum", "two_stage")

ABLATION_FLAGS = ("no_minimax", "no_discriminator",
                  "sample_by_entropy_only", "sample_by_dprob_only")


@dataclass(frozen=True)
class TrainConfig:
    # data
    dataset: str = "blobs"
    data_seed: int = 0
    blob_k: int = 8
    blob_per_class: int = 500
    blob_dim: int = 16
    blob_spread: float = 0.12
    blob_test_per_class: int = 125
    test_fraction: float = 0.2
    imbalance: bool = False
    imbalance_ratios: tuple[float, ...] = (0.01, 0.0316227766016838, 0.1,
                                           0.316227766016838, 1.0)
    imbalance_min_keep: int = 5
    # model
    encoder_hidden: tuple[int, ...] = (64,)
    latent_dim: int = 32
    disc_hidden: tuple[int, ...] = (32, 16)
    temperature: float = 0.05
    normalize_prototypes: bool = True
    # training
    epochs: int = 100
    task_epochs: int = 100
    steps_per_epoch: int = 0  # 0: ceil(|L| / batch_size)
    batch_size: int = 64
    lr_f: float = 1e-3
    lr_c: float = 1e-3
    lr_d: float = 1e-3
    lr_m: float = 1e-3
    lam: float = 1.0
    entropy_weight: float = 1.0
    entropy_sign: str = "clf_max"
    # active learning
    strategy: str = "mal"
    splits: int = 4
    budget: float = 0.02  # fraction of train pool if < 1, absolute count if >= 1
    initial_fraction: float = 0.02
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    mal_selection: str = "ranksum"
    reinit_per_split: bool = False
    # ablations
    no_minimax: bool = False
    no_discriminator: bool = False
    sample_by_entropy_only: bool = False
    sample_by_dprob_only: bool = False

    def validate(self) -> "TrainConfig":
        for name in ("lr_f", "lr_c", "lr_d", "lr_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.epochs < 1 or self.task_epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.splits < 0:
            raise ConfigError("splits must be >= 0")
        if self.budget <= 0:
            raise ConfigError("budget must be > 0")
        if not 0.0 < self.initial_fraction < 1.0:
            raise ConfigError("initial_fraction must be in (0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}, "
                              f"expected one of {STRATEGIES}")
        if self.entropy_sign not in ENTROPY_SIGNS:
            raise ConfigError(f"entropy_sign must be one of {ENTROPY_SIGNS}")
        if self.mal_selection not in MAL_SELECTIONS:
            raise ConfigError(f"mal_selection must be one of {MAL_SELECTIONS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.sample_by_entropy_only and self.sample_by_dprob_only:
            raise ConfigError("sample_by_entropy_only and sample_by_dprob_only "
                              "are mutually exclusive")
        if self.no_discriminator and self.sample_by_dprob_only:
            raise ConfigError("sample_by_dprob_only needs a trained discriminator")
        return self

    def ablation_name(self) -> str:
        on = [f for f in ABLATION_FLAGS if getattr(self, f)]
        return "+".join(on) if on else "full"

    def strategy_label(self) -> str:
        name = self.strategy
        if self.strategy == "mal" and self.ablation_name() != "full":
            name = f"mal({self.ablation_name()})"
        return name


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_value(name: str, text: str, pytype):
    text = text.strip()
    try:
        if pytype is bool:
            return _parse_bool(text)
        if pytype is int:
            return int(text)
        if pytype is float:
            return float(text)
        if pytype is str:
            return text
        if pytype in ("int_tuple", "float_tuple"):
            if not text:
                raise ConfigError(f"{name}: empty list")
            items = [t for t in text.split(",") if t.strip()]
            cast = int if pytype == "int_tuple" else float
            return tuple(cast(t) for t in items)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    raise ConfigError(f"{name}: unsupported type")


def _field_types() -> dict[str, object]:
    types = {}
    for f in fields(TrainConfig):
        if f.type.startswith("tuple[int"):
            types[f.name] = "int_tuple"
        elif f.type.startswith("tuple[float"):
            types[f.name] = "float_tuple"
        elif f.type == "bool":
            types[f.name] = bool
        elif f.type == "int":
            types[f.name] = int
        elif f.type == "float":
            types[f.name] = float
        else:
            types[f.name] = str
    return types


_TYPES = _field_types()


def apply_overrides(cfg: TrainConfig, pairs) -> TrainConfig:
    """Apply key=value overrides, type-checked against the schema."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _parse_value(key, value, _TYPES[key])
    return replace(cfg, **updates)


def parse_config_file(path) -> TrainConfig:
    """key=value lines; blank lines and #-comments ignored; unknown keys rejected."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split(" #", 1)[0].strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            pairs.append(text)
    return apply_overrides(TrainConfig(), pairs)


def config_snapshot(cfg: TrainConfig) -> dict:
    """Flat JSON-friendly view of every config field, in schema order."""
    out = {}
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def snapshot_to_config(snapshot: dict) -> TrainConfig:
    """Inverse of config_snapshot: rebuild a TrainConfig from its JSON view."""
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(snapshot) - known
    if unknown:
        raise ConfigError(f"unknown config keys in snapshot: {sorted(unknown)}")
    kwargs = {}
    for f in fields(TrainConfig):
        if f.name not in snapshot:
            continue
        v = snapshot[f.name]
        kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    return TrainConfig(**kwargs)


def format_config(cfg: TrainConfig) -> str:
    """Render as the same key=value syntax the parser accepts."""
    lines = []
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"
