"""
Simulation configuration.

The canonical config document is JSON whose keys are exactly the field names of
SimulationConfig. Documents are validated once at load time and the resulting
model is frozen; experiment variants are applied as validated overlays.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Callable, Dict, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from moral_sim.errors import ConfigError
from moral_sim.models import MoralType
from moral_sim.responses import dumps_canonical

logger = logging.getLogger(__name__)

_SUM_TOLERANCE = 1e-9


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


# ---------------------------------------------------------------------------
# Resource sections
# ---------------------------------------------------------------------------


class PlantParams(BaseModel):
    """Plant nodes: stationary, regrowing food patches."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    node_count: int = Field(
        default=4, ge=1, description="Plant nodes before abundance scaling."
    )
    initial_quantity: int = Field(ge=0, description="Edible units per plant at start.")
    capacity: int = Field(ge=1, description="Units a plant regrows to.")
    respawn_delay: int = Field(ge=0, description="Steps a depleted plant stays empty.")
    nutrition: int = Field(ge=0, description="HP restored per unit (H_plant).")


class PreyParams(BaseModel):
    """Prey population and per-animal parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    initial_count: int = Field(ge=0)
    hp_mean: float = Field(gt=0.0)
    hp_std: float = Field(ge=0.0)
    physical_ability: float
    respawn_rate: float = Field(ge=0.0, le=1.0, description="Spawn probability per empty slot.")
    max_count: int = Field(ge=0)
    difficulty: float = Field(gt=0.0, description="Multiplier on sampled prey HP.")
    counter_damage: int = Field(default=4, ge=0, description="D_prey dealt on a failed hunt.")


class LLMParams(BaseModel):
    """Chat-completion backend settings."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    provider_url: str = "https://api.openai.com"
    model_id: str = "gpt-4.1-mini-2025-04-14"
    max_retries: int = Field(default=10, ge=1)
    reflection_enabled: bool = True
    timeout: float = Field(default=60.0, gt=0.0)
    temperature: float = Field(default=1.0, ge=0.0, le=2.0)
    api_key_env: str = "MORALSIM_API_KEY"


# ---------------------------------------------------------------------------
# Top-level config
# ---------------------------------------------------------------------------


class SimulationConfig(BaseModel):
    """Validated, immutable parameter set for one simulation run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_time_steps: int = Field(ge=1)
    social_rounds_per_step: int = Field(ge=1)
    moral_type_visible: bool
    initial_agent_count: int = Field(ge=1)
    type_distribution: Dict[MoralType, float]
    perception_window: int = Field(ge=1)

    initial_hp: int = Field(ge=0)
    max_hp: int = Field(ge=0)
    initial_age: int = Field(ge=0)
    max_age: int = Field(ge=0)

    min_hp_repro: int = Field(ge=1)
    hp_cost_repro: int = Field(ge=0)
    min_age_repro: int = Field(ge=0)
    offspring_hp: int = Field(ge=0)

    pa_mean: float
    pa_std: float = Field(ge=0.0)
    pa_slope: float
    pa_intercept: float

    plant_params: PlantParams
    prey_params: PreyParams
    resource_abundance: float = Field(gt=0.0)

    metabolic_cost_per_step: int = Field(default=1, ge=0)
    collect_cap: int = Field(default=3, ge=1)
    message_max_length: int = Field(default=500, ge=1)
    checkpoint_interval: int = Field(default=1, ge=1)
    memory_cap_bytes: int = Field(default=16384, ge=256)

    llm: LLMParams = Field(default_factory=LLMParams)
    rng_seed: int = Field(ge=0, le=2**64 - 1)

    @field_validator("type_distribution")
    @classmethod
    def _check_distribution(cls, value: Dict[MoralType, float]) -> Dict[MoralType, float]:
        for moral_type, fraction in value.items():
            if not 0.0 <= fraction <= 1.0:
                raise ValueError(f"fraction for {moral_type.value} must be in [0, 1]")
        total = sum(value.values())
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise ValueError(f"distribution sums to {total:.2f}")
        return {t: float(value.get(t, 0.0)) for t in MoralType.ordered()}

    @model_validator(mode="after")
    def _check_bounds(self) -> "SimulationConfig":
        if self.initial_hp > self.max_hp:
            raise ValueError("initial_hp must not exceed max_hp")
        if self.initial_age > self.max_age:
            raise ValueError("initial_age must not exceed max_age")
        if self.offspring_hp > self.max_hp:
            raise ValueError("offspring_hp must not exceed max_hp")
        if self.pa_slope == 0:
            raise ValueError("pa_slope must be non-zero")
        return self

    # -- derived quantities -------------------------------------------------

    def scaled_count(self, base: int) -> int:
        """Apply resource abundance to a population count (nearest integer, minimum 1)."""
        if base <= 0:
            return 0
        return max(1, round_half_up(base * self.resource_abundance))

    @property
    def plant_node_count(self) -> int:
        return self.scaled_count(self.plant_params.node_count)

    @property
    def prey_initial_count(self) -> int:
        return self.scaled_count(self.prey_params.initial_count)

    @property
    def prey_max_count(self) -> int:
        return self.scaled_count(self.prey_params.max_count)

    @property
    def typical_prey_hp(self) -> int:
        return max(1, round_half_up(self.prey_params.hp_mean * self.prey_params.difficulty))

    def agents_to_kill(self, prey_max_hp: int) -> int:
        """Advisory hunting-party size shown to agents; never used in mechanics."""
        per_agent = max(1, math.floor(self.pa_mean))
        return math.ceil(prey_max_hp / per_agent) + 1


BASELINE: Dict[str, Any] = {
    "max_time_steps": 80,
    "social_rounds_per_step": 2,
    "moral_type_visible": True,
    "initial_agent_count": 8,
    "type_distribution": {
        "universal": 0.25,
        "reciprocal": 0.25,
        "kin": 0.25,
        "selfish": 0.25,
    },
    "perception_window": 15,
    "initial_hp": 20,
    "max_hp": 40,
    "initial_age": 10,
    "max_age": 20,
    "min_hp_repro": 12,
    "hp_cost_repro": 10,
    "min_age_repro": 4,
    "offspring_hp": 3,
    "pa_mean": 6.0,
    "pa_std": 0.0,
    "pa_slope": 5.0,
    "pa_intercept": 0.1,
    "plant_params": {
        "node_count": 4,
        "initial_quantity": 4,
        "capacity": 3,
        "respawn_delay": 10,
        "nutrition": 3,
    },
    "prey_params": {
        "initial_count": 4,
        "hp_mean": 5.0,
        "hp_std": 1.0,
        "physical_ability": 4.0,
        "respawn_rate": 0.1,
        "max_count": 6,
        "difficulty": 2.0,
        "counter_damage": 4,
    },
    "resource_abundance": 2.0,
    "metabolic_cost_per_step": 1,
    "collect_cap": 3,
    "message_max_length": 500,
    "checkpoint_interval": 1,
    "memory_cap_bytes": 16384,
    "llm": {
        "provider_url": "https://api.openai.com",
        "model_id": "gpt-4.1-mini-2025-04-14",
        "max_retries": 10,
        "reflection_enabled": True,
        "timeout": 60.0,
        "temperature": 1.0,
        "api_key_env": "MORALSIM_API_KEY",
    },
    "rng_seed": 42,
}


def _format_validation_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    loc = ".".join(str(part) for part in first.get("loc", ()))
    msg = first.get("msg", "invalid value")
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, ") :]
    if loc:
        return ConfigError(f"Invalid config field '{loc}': {msg}", field=loc)
    return ConfigError(f"Invalid config: {msg}")


def validate_config(data: Dict[str, Any]) -> SimulationConfig:
    """Validate an already-parsed document."""
    try:
        return SimulationConfig.model_validate(data)
    except ValidationError as e:
        raise _format_validation_error(e) from None


def load_config(document: Union[str, bytes]) -> SimulationConfig:
    """Parse and validate a JSON config document.

    Raises:
        ConfigError: If the document is not JSON or violates a constraint.
    """
    try:
        data = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Config document is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("Config document must be a JSON object")
    return validate_config(data)


def load_config_file(path: Union[str, Path]) -> SimulationConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from None
    return load_config(text)


def baseline_config(**overrides: Any) -> SimulationConfig:
    """The baseline experiment config, optionally with top-level overrides."""
    return validate_config({**BASELINE, **overrides})


def config_to_dict(config: SimulationConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def dump_config(config: SimulationConfig) -> str:
    """Serialize to the canonical JSON document."""
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)


def config_hash(config: SimulationConfig) -> str:
    return hashlib.sha256(dumps_canonical(config_to_dict(config)).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Experiment variants
# ---------------------------------------------------------------------------

_VARIANTS: Dict[str, Callable[[SimulationConfig], Dict[str, Any]]] = {
    "baseline": lambda base: {},
    "scarce_resource": lambda base: {"resource_abundance": 1.0},
    "abundant_resource": lambda base: {"resource_abundance": 3.0},
    "high_social_cost": lambda base: {"social_rounds_per_step": 1},
    "moral_invisible": lambda base: {"moral_type_visible": False},
}

_SINGLE_TYPE = re.compile(r"^single_type\s*[(:]\s*(\w+)\s*\)?$")


def variant_names() -> list[str]:
    return sorted(_VARIANTS) + [f"single_type({t.value})" for t in MoralType.ordered()]


def apply_variant(base: SimulationConfig, variant: str) -> SimulationConfig:
    """Overlay a named experiment variant on a base config.

    Accepted names: baseline, scarce_resource, abundant_resource, high_social_cost,
    moral_invisible, and single_type(T) / single_type:T for a moral type T.

    Raises:
        ConfigError: If the variant name is unknown.
    """
    name = variant.strip()
    match = _SINGLE_TYPE.match(name)
    if match:
        try:
            only = MoralType(match.group(1))
        except ValueError:
            raise ConfigError(
                f"Unknown moral type '{match.group(1)}' in variant '{variant}'",
                field="variant",
            ) from None
        update: Dict[str, Any] = {
            "type_distribution": {t.value: (1.0 if t == only else 0.0) for t in MoralType}
        }
    elif name in _VARIANTS:
        update = _VARIANTS[name](base)
    else:
        raise ConfigError(
            f"Unknown variant '{variant}'. Known variants: {', '.join(variant_names())}",
            field="variant",
        )

    if not update:
        return base
    logger.debug("Applying variant %s: %s", name, update)
    return validate_config({**config_to_dict(base), **update})
