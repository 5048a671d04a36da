"""Run configuration: YAML with regime / model / data / output sections.

Validation is exhaustive and happens before any side effect; error messages
name the offending field. A committed reference config per regime lives in
configs/ and doubles as schema documentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .data import RECIPE_PRESETS, DomainRecipe, SyntheticSpec
from .errors import ConfigError
from .regimes import ModelConfig, OptimizerConfig, RegimeConfig
from .objectives import LossWeights


@dataclass
class DataSection:
    root: str | None = None
    synthetic: SyntheticSpec | None = None
    synthetic_seed: int = 0
    augment: bool = False


@dataclass
class OutputSection:
    dir: str = "runs/out"
    checkpoint_every: int = 500
    sample_every: int = 0

    def validate(self) -> None:
        if self.checkpoint_every < 0:
            raise ConfigError(
                f"output.checkpoint_every must be >= 0, got {self.checkpoint_every}"
            )
        if self.sample_every < 0:
            raise ConfigError(f"output.sample_every must be >= 0, got {self.sample_every}")


@dataclass
class RunConfig:
    regime: RegimeConfig
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataSection = field(default_factory=DataSection)
    output: OutputSection = field(default_factory=OutputSection)


def _check_keys(section: str, mapping: dict, cls) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(mapping).__name__}")
    allowed = {f.name for f in fields(cls)}
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown field (allowed: {sorted(allowed)})")


def _build_regime(mapping: dict) -> RegimeConfig:
    mapping = dict(mapping)
    weights_map = mapping.pop("weights", {})
    optimizer_map = mapping.pop("optimizer", {})
    _check_keys("regime.weights", weights_map, LossWeights)
    _check_keys("regime.optimizer", optimizer_map, OptimizerConfig)
    _check_keys("regime", mapping, RegimeConfig)
    if "kind" not in mapping:
        raise ConfigError("regime.kind is required")
    if "domains" not in mapping:
        raise ConfigError("regime.domains is required")
    cfg = RegimeConfig(
        weights=LossWeights(**weights_map),
        optimizer=OptimizerConfig(**optimizer_map),
        **mapping,
    )
    cfg.validate()
    return cfg


def _build_recipe(index: int, mapping: dict) -> DomainRecipe:
    _check_keys(f"data.synthetic.recipes[{index}]", mapping, DomainRecipe)
    mapping = dict(mapping)
    for key in ("background", "color"):
        if key in mapping:
            value = mapping[key]
            if not isinstance(value, (list, tuple)) or len(value) != 3:
                raise ConfigError(
                    f"data.synthetic.recipes[{index}].{key}: expected 3 values"
                )
            mapping[key] = tuple(float(v) for v in value)
    if "name" not in mapping:
        raise ConfigError(f"data.synthetic.recipes[{index}].name is required")
    return DomainRecipe(**mapping)


def _build_synthetic(mapping: dict) -> SyntheticSpec:
    mapping = dict(mapping)
    preset = mapping.pop("preset", None)
    recipe_maps = mapping.pop("recipes", None)
    if preset is not None and recipe_maps is not None:
        raise ConfigError("data.synthetic: give either 'preset' or 'recipes', not both")
    if preset is not None:
        if preset not in RECIPE_PRESETS:
            raise ConfigError(
                f"data.synthetic.preset: unknown preset '{preset}' "
                f"(available: {sorted(RECIPE_PRESETS)})"
            )
        recipes = RECIPE_PRESETS[preset]()
    elif recipe_maps is not None:
        if not isinstance(recipe_maps, list):
            raise ConfigError("data.synthetic.recipes: expected a list")
        recipes = [_build_recipe(i, r) for i, r in enumerate(recipe_maps)]
    else:
        raise ConfigError("data.synthetic: 'preset' or 'recipes' is required")
    _check_keys("data.synthetic", mapping, SyntheticSpec)
    spec = SyntheticSpec(recipes=recipes, **mapping)
    spec.validate()
    return spec


def _build_data(mapping: dict) -> DataSection:
    mapping = dict(mapping)
    synthetic_map = mapping.pop("synthetic", None)
    _check_keys("data", mapping, DataSection)
    synthetic = _build_synthetic(synthetic_map) if synthetic_map is not None else None
    section = DataSection(synthetic=synthetic, **mapping)
    if (section.root is None) == (section.synthetic is None):
        raise ConfigError("data: exactly one of 'root' or 'synthetic' is required")
    return section


def build_run_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a mapping of sections")
    known = {"regime", "model", "data", "output"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown section (allowed: {sorted(known)})")
    if "regime" not in raw:
        raise ConfigError("regime section is required")
    if "data" not in raw:
        raise ConfigError("data section is required")
    regime = _build_regime(raw["regime"])

    model_map = raw.get("model", {})
    _check_keys("model", model_map, ModelConfig)
    model = ModelConfig(**model_map)
    model.validate()

    data = _build_data(raw["data"])

    output_map = raw.get("output", {})
    _check_keys("output", output_map, OutputSection)
    output = OutputSection(**output_map)
    output.validate()

    if data.synthetic is not None:
        if data.synthetic.image_size != model.image_size:
            raise ConfigError(
                f"data.synthetic.image_size {data.synthetic.image_size} must match "
                f"model.image_size {model.image_size}"
            )
        recipe_names = [r.name for r in data.synthetic.recipes]
        missing = [d for d in regime.domains if d not in recipe_names]
        if missing:
            raise ConfigError(
                f"data.synthetic.recipes: no recipe for domains {missing}"
            )
        if regime.kind == "paired" and not data.synthetic.aligned:
            raise ConfigError("data.synthetic.aligned must be true for the paired regime")
    return RunConfig(regime=regime, model=model, data=data, output=output)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return build_run_config(raw)


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    """Parse a standalone synthetic-domain spec file (the data.synthetic schema)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return _build_synthetic(raw)
