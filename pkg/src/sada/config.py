"""Experiment configuration: typed defaults, a line-oriented file format and overrides.

File format::

    # comment
    [run]
    epochs = 30
    [tracker]
    decay = 0.9

Keys may also be written fully qualified (``tracker.decay = 0.9``), which is
the form used for command-line overrides.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

from sada.augment import CATALOG, AugOp, MagnitudeSpec
from sada.errors import ConfigError
from sada.learner import Arch
from sada.tracker import Direction, TrackerConfig

SECTIONS = ("run", "model", "data", "tracker", "space")


class Policy(str, enum.Enum):
    NOAUG = "noaug"
    FIXED_RANDOM = "fixed_random"
    SADA = "sada"


class DataSource(str, enum.Enum):
    BLOB_IMAGES = "blob_images"
    BLOBS = "blobs"
    IDX = "idx"
    PNG = "png"
    CSV = "csv"


@dataclass(frozen=True)
class RunConfig:
    epochs: int = 30
    batch_size: int = 8
    eta: float = 0.01
    seed: int = 0
    policy: Policy = Policy.SADA
    eval_every: int = 1
    track: bool = True
    timing: bool = True
    dump_state: bool = True
    trace: bool = True
    threads: int = 1


@dataclass(frozen=True)
class ModelConfig:
    arch: Arch = Arch.MLP
    hidden: int = 64


@dataclass(frozen=True)
class DataConfig:
    source: DataSource = DataSource.BLOB_IMAGES
    classes: int = 10
    n_per_class: int = 30
    test_per_class: int = 200
    dim: int = 10
    side: int = 12
    spread: float = 0.3
    amplitude: float = 80.0
    jitter: float = 0.0
    test_jitter: float = 0.5
    test_fraction: float = 0.5
    path: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    longtail_ratio: float = 1.0
    longtail_nmax: int = 0
    flip_crop: str = "auto"


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    space: MagnitudeSpec = field(default_factory=MagnitudeSpec)

    def with_overrides(self, **sections):
        """``cfg.with_overrides(run={"seed": 3})`` returns a validated copy."""
        flat = to_flat(self)
        for sec, kv in sections.items():
            for k, v in kv.items():
                key = f"{sec}.{k}"
                if key not in FIELD_TYPES:
                    raise ConfigError(f"unknown key {key!r}")
                flat[key] = _coerce(key, v) if type(v) is str else v
        return from_flat(flat)


HELP = {
    "run.epochs": "number of training epochs (>= 1)",
    "run.batch_size": "mini-batch size (>= 1)",
    "run.eta": "SGD learning rate applied to the summed batch gradient (> 0)",
    "run.seed": "run seed for data, init, shuffling and augmentation (env SADA_SEED overrides)",
    "run.policy": "augmentation policy: noaug | fixed_random | sada",
    "run.eval_every": "evaluate test accuracy every N epochs (final epoch always)",
    "run.track": "record per-sample dynamics (false disables the tracker entirely)",
    "run.timing": "write wall-clock columns to metrics.csv (false writes 0 for byte-stable output)",
    "run.dump_state": "write per-sample tracker state to state.csv",
    "run.trace": "write the per-sample augmentation trace to trace.csv",
    "run.threads": "worker threads for augmentation; results do not depend on it",
    "model.arch": "linear | mlp",
    "model.hidden": "hidden units of the mlp",
    "data.source": "blob_images | blobs | idx | png | csv",
    "data.classes": "number of classes for synthetic data",
    "data.n_per_class": "training samples per class for blob_images; samples per class before the split for blobs",
    "data.test_per_class": "test samples per class for blob_images",
    "data.dim": "feature dimension for data.source = blobs (>= classes)",
    "data.side": "image side length for blob_images",
    "data.spread": "isotropic noise standard deviation for synthetic data",
    "data.amplitude": "grey-level amplitude of blob_images templates",
    "data.jitter": "pose/lighting variation of blob_images training images, in [0, 1]",
    "data.test_jitter": "pose/lighting variation of blob_images test images, in [0, 1]",
    "data.test_fraction": "held-out fraction for blobs / png / csv / idx without a test pair",
    "data.path": "png root directory or csv file",
    "data.train_images": "IDX training images",
    "data.train_labels": "IDX training labels",
    "data.test_images": "IDX test images (optional)",
    "data.test_labels": "IDX test labels (optional)",
    "data.longtail_ratio": "long-tail imbalance ratio in (0, 1]; 1 disables",
    "data.longtail_nmax": "head-class size for the long-tail subsample; 0 disables",
    "data.flip_crop": "random flip + crop before the sampled op: auto | true | false (auto: png only)",
    "tracker.window_len": "delta window length L (>= 1)",
    "tracker.decay": "EMA weight on the newest windowed variance, in [0, 1]",
    "tracker.direction": "inverse (stable samples augmented more) | direct",
    "tracker.warmup_strength": "strength used before the first full window, in [0, 1]",
    "tracker.prob_floor": "probability clamp inside logarithms, in (0, 1e-3]",
    "tracker.clean_pass": "record un-augmented outputs from an extra epoch-end pass",
    "space.m_max": "global magnitude cap in (0, 1]",
    "space.ops": "comma-separated op names or 'all'",
}

_SECTION_TYPES = {"run": RunConfig, "model": ModelConfig, "data": DataConfig,
                  "tracker": TrackerConfig}


def _field_types():
    out = {}
    for sec, cls in _SECTION_TYPES.items():
        for f in fields(cls):
            out[f"{sec}.{f.name}"] = (f.type, f.default)
    out["space.m_max"] = ("float", 1.0)
    out["space.ops"] = ("ops", "all")
    return out


FIELD_TYPES = _field_types()
_ENUMS = {"Policy": Policy, "DataSource": DataSource, "Arch": Arch, "Direction": Direction}


def _coerce(key, raw, line=None):
    typ, _ = FIELD_TYPES[key]
    text = str(raw).strip()
    try:
        if typ == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"expected a boolean, got {text!r}")
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        if typ == "str":
            return text
        if typ == "ops":
            if text.lower() == "all":
                return CATALOG
            return tuple(AugOp(t.strip()) for t in text.split(",") if t.strip())
        return _ENUMS[typ](text.lower())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{key}: bad value {text!r} ({exc})", line) from None


def defaults_flat():
    return to_flat(ExperimentConfig())


def to_flat(cfg):
    flat = {}
    for sec in ("run", "model", "data", "tracker"):
        obj = getattr(cfg, sec)
        for f in fields(obj):
            flat[f"{sec}.{f.name}"] = getattr(obj, f.name)
    flat["space.m_max"] = cfg.space.m_max
    flat["space.ops"] = cfg.space.ops
    return flat


_RANGE_CHECKS = {
    "run.epochs": (lambda v: v >= 1, "epochs >= 1"),
    "run.batch_size": (lambda v: v >= 1, "batch_size >= 1"),
    "run.eta": (lambda v: v > 0, "eta > 0"),
    "run.eval_every": (lambda v: v >= 1, "eval_every >= 1"),
    "run.threads": (lambda v: v >= 1, "threads >= 1"),
    "run.seed": (lambda v: 0 <= v < 2**64, "0 <= seed < 2^64"),
    "model.hidden": (lambda v: v >= 1, "hidden >= 1"),
    "data.classes": (lambda v: v >= 2, "classes >= 2"),
    "data.n_per_class": (lambda v: v >= 1, "n_per_class >= 1"),
    "data.dim": (lambda v: v >= 1, "dim >= 1"),
    "data.side": (lambda v: v >= 3, "side >= 3"),
    "data.spread": (lambda v: v >= 0, "spread >= 0"),
    "data.test_per_class": (lambda v: v >= 1, "test_per_class >= 1"),
    "data.jitter": (lambda v: 0 <= v <= 1, "0 <= jitter <= 1"),
    "data.test_jitter": (lambda v: 0 <= v <= 1, "0 <= test_jitter <= 1"),
    "data.test_fraction": (lambda v: 0 < v < 1, "0 < test_fraction < 1"),
    "data.longtail_ratio": (lambda v: 0 < v <= 1, "0 < longtail_ratio <= 1"),
    "data.longtail_nmax": (lambda v: v >= 0, "longtail_nmax >= 0"),
    "data.flip_crop": (lambda v: v in ("auto", "true", "false"), "flip_crop in {auto, true, false}"),
    "tracker.window_len": (lambda v: v >= 1, "L >= 1"),
    "tracker.decay": (lambda v: 0 <= v <= 1, "0 <= decay <= 1"),
    "tracker.warmup_strength": (lambda v: 0 <= v <= 1, "0 <= warmup_strength <= 1"),
    "tracker.prob_floor": (lambda v: 0 < v <= 1e-3, "0 < prob_floor <= 1e-3"),
    "space.m_max": (lambda v: 0 < v <= 1, "0 < m_max <= 1"),
    "space.ops": (lambda v: len(v) >= 1, "at least one op"),
}


def from_flat(flat, lines=None):
    lines = lines or {}
    for key, (check, desc) in _RANGE_CHECKS.items():
        if not check(flat[key]):
            raise ConfigError(f"{key} = {flat[key]!r} out of range (requires {desc})", lines.get(key))
    sec = {s: {} for s in SECTIONS}
    for key, value in flat.items():
        s, name = key.split(".", 1)
        sec[s][name] = value
    return ExperimentConfig(
        run=RunConfig(**sec["run"]),
        model=ModelConfig(**sec["model"]),
        data=DataConfig(**sec["data"]),
        tracker=TrackerConfig(**sec["tracker"]),
        space=MagnitudeSpec(m_max=sec["space"]["m_max"], ops=sec["space"]["ops"]),
    )


def _assign(flat, lines, key, raw, line):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown key {key!r}", line)
    flat[key] = _coerce(key, raw, line)
    lines[key] = line


def parse_config(text, overrides=()):
    """Parse config text plus ``key=value`` overrides into a validated config.

    Either the whole input is accepted or :class:`ConfigError` is raised.
    """
    flat = defaults_flat()
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", no)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        key, value = (p.strip() for p in line.split("=", 1))
        if "." not in key:
            if section is None:
                raise ConfigError(f"key {key!r} outside any section", no)
            key = f"{section}.{key}"
        _assign(flat, lines, key, value, no)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (p.strip() for p in item.split("=", 1))
        _assign(flat, lines, key, value, None)
    return from_flat(flat, lines)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if tuple(value) == CATALOG:
            return "all"
        return ",".join(AugOp(v).value for v in value)
    return str(value)


def serialize_config(cfg):
    flat = to_flat(cfg)
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        out.extend(f"{k.split('.', 1)[1]} = {_format(v)}" for k, v in flat.items()
                   if k.startswith(sec + "."))
        out.append("")
    return "\n".join(out)


def describe_keys():
    """One line per key with its default, for ``--help``."""
    flat = defaults_flat()
    return "\n".join(f"  {k} = {_format(flat[k])}    {HELP[k]}" for k in FIELD_TYPES)

