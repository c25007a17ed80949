"""Experiment configuration: dataclasses, presets, and the config-file parser.

Config files are flat, line-oriented ``key = value`` text. Keys are dotted
paths into the config record (``dims.d_g = 32``), ``#`` starts a comment,
blank lines are ignored. Booleans accept true/false/1/0 (case-insensitive).
Unknown keys and unparseable values are rejected, never ignored.

Each benchmark row of the report has exactly one named preset; presets carry
the display label used in the report's ``config`` column.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List

from fuserec.errors import ConfigError


@dataclass
class Flags:
    quantize: bool = False
    distill: bool = False
    lora: bool = False
    cache: bool = False


@dataclass
class Dims:
    d_g: int = 32
    d_s: int = 32
    d_h: int = 64
    L: int = 2
    lora_rank: int = 4
    lora_alpha: float = 8.0


@dataclass
class Training:
    epochs: int = 5
    lr: float = 1e-3
    negatives_per_positive: int = 4
    batch_size: int = 8192
    distill_temperature: float = 2.0
    distill_lambda: float = 0.5


@dataclass
class Eval:
    k: int = 10
    n_latency_requests: int = 1000
    warmup: int = 50
    candidates_per_user: int = 100


@dataclass
class ExperimentConfig:
    variant: str = "hybrid"
    flags: Flags = field(default_factory=Flags)
    dims: Dims = field(default_factory=Dims)
    training: Training = field(default_factory=Training)
    eval: Eval = field(default_factory=Eval)
    seed: int = 0
    label: str = "Hybrid (Unoptimized)"

    def validate(self) -> None:
        if self.variant not in ("gnn_only", "text_only", "hybrid"):
            raise ConfigError(f"variant must be gnn_only|text_only|hybrid, got {self.variant!r}")
        if self.dims.L < 1:
            raise ConfigError("dims.L must be >= 1")
        for name in ("d_g", "d_s", "d_h", "lora_rank"):
            if getattr(self.dims, name) < 1:
                raise ConfigError(f"dims.{name} must be >= 1")
        if self.training.epochs < 0:
            raise ConfigError("training.epochs must be >= 0")
        if self.training.lr <= 0:
            raise ConfigError("training.lr must be > 0")
        if self.training.negatives_per_positive < 1:
            raise ConfigError("training.negatives_per_positive must be >= 1")
        if self.training.batch_size < 1:
            raise ConfigError("training.batch_size must be >= 1")
        if self.training.distill_temperature <= 0:
            raise ConfigError("training.distill_temperature must be > 0")
        if not 0.0 <= self.training.distill_lambda <= 1.0:
            raise ConfigError("training.distill_lambda must be in [0, 1]")
        if self.eval.k < 1:
            raise ConfigError("eval.k must be >= 1")
        if self.eval.candidates_per_user < 1:
            raise ConfigError("eval.candidates_per_user must be >= 1")


# preset name -> (display label, variant, flag names switched on)
PRESETS: Dict[str, tuple] = {
    "gnn_only": ("GNN Only", "gnn_only", ()),
    "text_only": ("LLM Only", "text_only", ()),
    "hybrid": ("Hybrid (Unoptimized)", "hybrid", ()),
    "hybrid_quant": ("Hybrid + Quantization", "hybrid", ("quantize",)),
    "hybrid_distill": ("Hybrid + Distillation", "hybrid", ("distill",)),
    "hybrid_lora": ("Hybrid + LoRA", "hybrid", ("lora",)),
    "hybrid_cache": ("Hybrid + DeepSpeed", "hybrid", ("cache",)),
    "hybrid_cache_quant": ("Hybrid + FPGA + DeepSpeed", "hybrid", ("cache", "quantize")),
}

PRESET_ORDER: List[str] = list(PRESETS)


def make_preset(name: str, base: ExperimentConfig = None) -> ExperimentConfig:
    """Config for one benchmark row; ``base`` supplies shared knobs and seed."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESET_ORDER)}")
    label, variant, on_flags = PRESETS[name]
    cfg = copy_config(base) if base is not None else ExperimentConfig()
    cfg.variant = variant
    cfg.flags = Flags(**{f: True for f in on_flags})
    cfg.label = label
    return cfg


def copy_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return ExperimentConfig(
        variant=cfg.variant,
        flags=dataclasses.replace(cfg.flags),
        dims=dataclasses.replace(cfg.dims),
        training=dataclasses.replace(cfg.training),
        eval=dataclasses.replace(cfg.eval),
        seed=cfg.seed,
        label=cfg.label,
    )


_SECTIONS = {"flags": Flags, "dims": Dims, "training": Training, "eval": Eval}


def _coerce(key: str, raw: str, target_type: type):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "1"):
            return True
        if low in ("false", "0"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    if target_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from None
    if target_type is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from None
    return raw


def apply_kv(cfg: ExperimentConfig, key: str, raw_value: str) -> None:
    key = key.strip()
    if key in ("variant", "label"):
        setattr(cfg, key, raw_value.strip())
        return
    if key == "seed":
        cfg.seed = _coerce(key, raw_value, int)
        return
    if "." in key:
        section, _, leaf = key.partition(".")
        if section in _SECTIONS:
            section_obj = getattr(cfg, section)
            fields = {f.name: f.type for f in dataclasses.fields(section_obj)}
            if leaf in fields:
                ftype = type(getattr(section_obj, leaf))
                setattr(section_obj, leaf, _coerce(key, raw_value, ftype))
                return
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    cfg = copy_config(base) if base is not None else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, value = stripped.partition("=")
        try:
            apply_kv(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path, base: ExperimentConfig = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Round-trippable serialization in the same key = value grammar."""
    lines = [f"variant = {cfg.variant}", f"label = {cfg.label}", f"seed = {cfg.seed}"]
    for section in ("flags", "dims", "training", "eval"):
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            val = getattr(obj, f.name)
            if isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{section}.{f.name} = {val}")
    return "\n".join(lines) + "\n"
