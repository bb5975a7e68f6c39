"""Run configuration.

One JSON file drives the whole pipeline: corpus generation, training,
inference and scoring.  Nested sections mirror the library objects; every
field except ``seed`` has a default.  The type inventory may be given
explicitly or is derived from the generator section.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .docmodel import TypeInventory
from .synth import GenConfig, inventory_for
from .valuenet import DvnConfig

# Corpus split that realizes the default 500/30/40 document scale.
DEFAULT_SPLIT = (500.0 / 570.0, 30.0 / 570.0, 40.0 / 570.0)


class ConfigError(Exception):
    """A run configuration is missing or malformed."""


@dataclass
class ModelDims:
    hidden: int = 128
    width_dim: int = 8
    label_dim: int = 16
    enc_dim: int = 32
    dvn_hidden: int = 64
    max_chunk_tokens: int = 128
    max_antecedents: int = 50

    def __post_init__(self) -> None:
        for name in ("hidden", "width_dim", "label_dim", "enc_dim", "dvn_hidden",
                     "max_chunk_tokens", "max_antecedents"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")


@dataclass
class OptimSettings:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 8
    max_epochs: int = 250
    patience: int = 15

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("optim.lr must be positive and optim.weight_decay non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("optim.batch_size/max_epochs must be >= 1 and patience >= 0")


@dataclass
class RunConfig:
    seed: int
    corpus_dir: Path
    out_dir: Path
    features: dict = field(default_factory=lambda: {"kind": "hashed", "dim": 64, "seed": 0})
    model: ModelDims = field(default_factory=ModelDims)
    dvn: DvnConfig = field(default_factory=DvnConfig)
    optim: OptimSettings = field(default_factory=OptimSettings)
    generator: Optional[GenConfig] = None
    split_ratios: tuple[float, float, float] = DEFAULT_SPLIT
    inventory: Optional[TypeInventory] = None

    def resolved_inventory(self) -> TypeInventory:
        if self.inventory is not None:
            return self.inventory
        if self.generator is not None:
            return inventory_for(self.generator)
        raise ConfigError("config needs an 'inventory' section or a 'generator' section")

    def corpus_path(self, part: str) -> Path:
        return self.corpus_dir / f"{part}.jsonl"


def _section(obj: Mapping, name: str) -> dict:
    value = obj.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(value)


def _build(cls, section: dict, name: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from None


def load_run_config(path, seed_override: Optional[int] = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    if seed_override is None and "seed" not in obj:
        raise ConfigError("config is missing required field 'seed'")
    seed = int(seed_override if seed_override is not None else obj["seed"])

    paths = _section(obj, "paths")
    base = Path(path).resolve().parent
    corpus_dir = base / paths.get("corpus_dir", "corpus")
    out_dir = base / paths.get("out_dir", "out")

    gen_section = _section(obj, "generator")
    generator = None
    if gen_section or "generator" in obj:
        gen_section.setdefault("seed", seed)
        for key in ("sentences_per_doc", "tokens_per_sentence", "chain_len", "level_mix"):
            if key in gen_section:
                gen_section[key] = tuple(gen_section[key])
        generator = _build(GenConfig, gen_section, "generator")

    inventory = None
    if "inventory" in obj:
        try:
            inventory = TypeInventory.from_dict(obj["inventory"])
        except (KeyError, Exception) as exc:  # noqa: BLE001 - surfaced as config error
            raise ConfigError(f"config section 'inventory': {exc}") from None

    split = obj.get("split_ratios", list(DEFAULT_SPLIT))
    if not isinstance(split, (list, tuple)) or len(split) != 3:
        raise ConfigError("split_ratios must be a list of three numbers")

    return RunConfig(
        seed=seed,
        corpus_dir=corpus_dir,
        out_dir=out_dir,
        features={"kind": "hashed", "dim": 64, "seed": 0, **_section(obj, "features")},
        model=_build(ModelDims, _section(obj, "model"), "model"),
        dvn=DvnConfig.from_dict(_section(obj, "dvn")),
        optim=_build(OptimSettings, _section(obj, "optim"), "optim"),
        generator=generator,
        split_ratios=(float(split[0]), float(split[1]), float(split[2])),
        inventory=inventory,
    )
