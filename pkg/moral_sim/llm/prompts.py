"""
Prompt assets and message assembly.

Templates ship as package data under moral_sim/prompts/ and use string.Template
placeholders. Every number an agent reads about the rules is substituted from the
live SimulationConfig, so prompts and mechanics cannot disagree.
"""

import json
import logging
from dataclasses import dataclass
from importlib import resources
from string import Template
from typing import Dict, List, Union

from moral_sim.actions import FIGHT_COST, P_MAX, P_MIN
from moral_sim.cognition.observation import ObservationBundle
from moral_sim.cognition.schema import THINKING_MAX_WORDS
from moral_sim.config import SimulationConfig
from moral_sim.models import MoralType

logger = logging.getLogger(__name__)

# Steps a hunter waits for a fair share before planning retaliation
HUNT_SHARE_PATIENCE = 3

_SYSTEM_SECTIONS = ("system_basic", "system_dynamics", "system_input", "system_output")

_VISIBLE_BASIC = (
    "You can view the other agents' moral type: whether they care about themselves only, "
    "about their own family only, about those who would care back, or about anyone "
    "regardless of moral type. Their moral type reliably decides what kind of person they "
    "are, just as your own moral character drives you. Decide your attitude and interaction "
    "strategy with them accordingly."
)
_HIDDEN_BASIC = (
    "You cannot see the other agents' moral type. Some care about themselves only, some about "
    "their own family only, some about those who would care back, and some about anyone. "
    "Infer who is who from how they behave toward you and others, and decide your attitude "
    "and interaction strategy accordingly."
)
_VISIBLE_INPUT = (
    "Importantly, you can see the others' moral type here. This matters a lot to how you "
    "deal with them."
)
_HIDDEN_INPUT = "Their moral type is not shown; judge them by their behavior."
_REFLECTION_ON = (
    "For each response you give, you will be asked to reflect on it, revise it and return it "
    "again. Don't treat your first response as an action you already took."
)
_REFLECTION_OFF = "Your first valid response is final, so get it right the first time."

Message = Dict[str, str]


def _read_template(name: str) -> str:
    return resources.files("moral_sim.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptAssets:
    """Raw prompt templates: four moral-type prompts plus the system sections."""

    moral: Dict[str, str]
    system: Dict[str, str]
    reflection: str
    judge: str

    @classmethod
    def load(cls) -> "PromptAssets":
        return cls(
            moral={t.value: _read_template(f"moral_{t.value}").strip() for t in MoralType},
            system={name: _read_template(name) for name in _SYSTEM_SECTIONS},
            reflection=_read_template("reflection"),
            judge=_read_template("judge"),
        )


def template_values(config: SimulationConfig) -> Dict[str, Union[int, str]]:
    """Placeholder values for every template, derived from the config."""
    typical = config.typical_prey_hp
    return {
        "social_rounds": config.social_rounds_per_step,
        "max_age": config.max_age,
        "max_hp": config.max_hp,
        "metabolic_cost": config.metabolic_cost_per_step,
        "hp_cost_repro": config.hp_cost_repro,
        "min_age_repro": config.min_age_repro,
        "min_hp_repro": config.min_hp_repro,
        "offspring_hp": config.offspring_hp,
        "plant_nutrition": config.plant_params.nutrition,
        "collect_cap": config.collect_cap,
        "respawn_delay": config.plant_params.respawn_delay,
        "p_min_pct": round(P_MIN * 100),
        "p_max_pct": round(P_MAX * 100),
        "counter_damage": config.prey_params.counter_damage,
        "action_cost": FIGHT_COST,
        "typical_prey_hp": typical,
        "agents_to_kill": config.agents_to_kill(typical),
        "message_max_length": config.message_max_length,
        "perception_window": config.perception_window,
        "thinking_max_words": THINKING_MAX_WORDS,
        "memory_cap_bytes": config.memory_cap_bytes,
        "hunt_share_patience": HUNT_SHARE_PATIENCE,
        "visibility_basic": _VISIBLE_BASIC if config.moral_type_visible else _HIDDEN_BASIC,
        "visibility_input": _VISIBLE_INPUT if config.moral_type_visible else _HIDDEN_INPUT,
        "reflection_note": _REFLECTION_ON if config.llm.reflection_enabled else _REFLECTION_OFF,
    }


def render_system_sections(assets: PromptAssets, config: SimulationConfig) -> Dict[str, str]:
    values = template_values(config)
    return {name: Template(text).substitute(values) for name, text in assets.system.items()}


def render_system_prompt(
    assets: PromptAssets, config: SimulationConfig, moral_type: Union[MoralType, str]
) -> str:
    """Moral-type prompt followed by the rendered system sections."""
    sections = render_system_sections(assets, config)
    parts = [assets.moral[MoralType(moral_type).value]]
    parts.extend(sections[name].strip() for name in _SYSTEM_SECTIONS)
    return "\n\n".join(parts)


def render_reflection(assets: PromptAssets, config: SimulationConfig) -> str:
    return Template(assets.reflection).substitute(template_values(config)).strip()


def build_messages(
    assets: PromptAssets, bundle: ObservationBundle, config: SimulationConfig
) -> List[Message]:
    """System message (moral prompt plus system prompts) and the observation as the user turn."""
    system = render_system_prompt(assets, config, bundle.moral_type)
    user = json.dumps(bundle.to_dict(), indent=2, sort_keys=True)
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]
