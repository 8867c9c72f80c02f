"""
Observation assembly.

Builds the per-agent ObservationBundle handed to a policy: own status, the
resource environment, other agents, a windowed history split into the four
perception channels, and the agent's own memory and plan from its last output.
"""

import bisect
import copy
import logging
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Set

from moral_sim.models import (
    ActionKind,
    EventRecord,
    RoundPhase,
    SystemEventKind,
)

if TYPE_CHECKING:
    from moral_sim.world import WorldState

logger = logging.getLogger(__name__)

_HP_ACTIONS = {
    ActionKind.ALLOCATE.value,
    ActionKind.FIGHT.value,
    ActionKind.ROB.value,
    ActionKind.HUNT.value,
    ActionKind.COLLECT.value,
    ActionKind.REPRODUCE.value,
}
_QUIET_ACTIONS = {ActionKind.DO_NOTHING.value, ActionKind.COMMUNICATE.value}


@dataclass
class ObservationBundle:
    """Everything one agent perceives before one decision."""

    agent_id: str
    step: int
    round_index: int
    round_kind: str
    rounds_per_step: int
    legal_actions: List[str]
    self_status: Dict[str, Any]
    environment: Dict[str, Any]
    other_agents: List[Dict[str, Any]]
    history: Dict[str, List[Dict[str, Any]]]
    long_term_memory: Dict[str, Any]
    short_term_plan: Dict[str, Any]
    rules: Dict[str, Any]
    moral_types_visible: bool = True
    decision_subject: Optional[Dict[str, Any]] = None
    window_start: int = 0

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.decision_subject is None:
            data.pop("decision_subject")
        return data

    # -- lookups used by policies and validation ----------------------------

    @property
    def moral_type(self) -> str:
        return self.self_status["moral_type"]

    @property
    def hp(self) -> int:
        return self.self_status["hp"]

    def other(self, agent_id: str) -> Optional[Dict[str, Any]]:
        for other in self.other_agents:
            if other["agent_id"] == agent_id:
                return other
        return None

    def plant(self, plant_id: str) -> Optional[Dict[str, Any]]:
        for plant in self.environment["plants"]:
            if plant["plant_id"] == plant_id:
                return plant
        return None

    def prey(self, prey_id: str) -> Optional[Dict[str, Any]]:
        for prey in self.environment["prey"]:
            if prey["prey_id"] == prey_id:
                return prey
        return None

    def family_ids(self) -> List[str]:
        return [member["agent_id"] for member in self.self_status["family"]]


def render_event(event: EventRecord) -> Dict[str, Any]:
    """Compact, agent-facing view of an EventRecord."""
    data: Dict[str, Any] = {
        "seq": event.seq,
        "step": event.step,
        "round": event.round_index,
        "actor": event.actor_id,
        "action": event.kind,
        "targets": list(event.targets),
        "success": event.success,
        "hp_changes": dict(event.hp_deltas),
    }
    if event.parameters:
        data["details"] = copy.deepcopy(event.parameters)
    if event.message is not None:
        data["message"] = event.message
    if event.failure_reason is not None:
        data["failure_reason"] = event.failure_reason
    return data


def _allocation_recipients(event: EventRecord) -> Set[str]:
    if event.kind == ActionKind.ALLOCATE.value:
        return set(event.parameters.get("plan", {}))
    return set()


def _window_events(state: "WorldState", window_start: int) -> List[EventRecord]:
    first = bisect.bisect_left(state.events, window_start, key=lambda e: e.step)
    return state.events[first:]


def reproduction_status(state: "WorldState", agent_id: str) -> Dict[str, Any]:
    agent = state.agents[agent_id]
    config = state.config
    unmet = []
    if agent.age < config.min_age_repro:
        unmet.append(f"minimum age {config.min_age_repro}")
    if agent.hp < config.min_hp_repro:
        unmet.append(f"minimum HP {config.min_hp_repro}")
    return {"eligible": not unmet, "unmet": unmet}


def assemble_observation(
    state: "WorldState",
    agent_id: str,
    phase: RoundPhase,
    decision_subject: Optional[Dict[str, Any]] = None,
) -> ObservationBundle:
    """Build the bundle for one living agent.

    Raises:
        ValueError: If the agent is unknown or dead.
    """
    agent = state.agents.get(agent_id)
    if agent is None:
        raise ValueError(f"Unknown agent '{agent_id}'")
    if not agent.alive:
        raise ValueError(f"Agent '{agent_id}' is dead and cannot perceive")

    config = state.config
    visible = config.moral_type_visible
    relations = state.family_relations(agent_id)
    family = set(relations)

    self_status = {
        "agent_id": agent.agent_id,
        "moral_type": agent.moral_type.value,
        "hp": agent.hp,
        "max_hp": agent.max_hp,
        "age": agent.age,
        "max_age": config.max_age,
        "physical_ability": agent.physical_ability,
        "parent_id": agent.parent_id,
        "children": [c for c in agent.children if state.is_alive(c)],
        "family": [
            {
                "agent_id": member_id,
                "relation": relation,
                "hp": state.agents[member_id].hp,
                "age": state.agents[member_id].age,
            }
            for member_id, relation in relations.items()
            if state.is_alive(member_id)
        ],
        "reproduction": reproduction_status(state, agent_id),
    }

    environment = {
        "plants": [
            {
                "plant_id": p.plant_id,
                "quantity": p.quantity,
                "capacity": p.capacity,
                "nutrition_per_unit": p.nutrition_per_unit,
                "steps_until_respawn": p.steps_until_respawn,
            }
            for p in state.plants.values()
        ],
        "prey": [
            {
                "prey_id": p.prey_id,
                "hp": p.hp,
                "max_hp": p.max_hp,
                "physical_ability": p.physical_ability,
                "counter_damage": p.counter_damage,
                "num_agents_to_kill": p.num_agents_to_kill,
            }
            for p in state.prey.values()
            if p.hp > 0
        ],
    }

    other_agents = []
    for other in state.living_agents():
        if other.agent_id == agent_id:
            continue
        entry: Dict[str, Any] = {
            "agent_id": other.agent_id,
            "age": other.age,
            "hp": other.hp,
            "physical_ability": other.physical_ability,
            "is_family": other.agent_id in family,
        }
        if visible:
            entry["moral_type"] = other.moral_type.value
        other_agents.append(entry)

    window_start = max(0, state.step - config.perception_window + 1)
    history = _split_history(state, agent_id, family, window_start)

    return ObservationBundle(
        agent_id=agent_id,
        step=state.step,
        round_index=phase.round_index,
        round_kind=phase.kind.value,
        rounds_per_step=config.social_rounds_per_step + 1,
        legal_actions=phase.legal_list(),
        self_status=self_status,
        environment=environment,
        other_agents=other_agents,
        history=history,
        long_term_memory=copy.deepcopy(agent.memory_doc),
        short_term_plan=copy.deepcopy(agent.short_term_plan),
        rules={
            "max_hp": config.max_hp,
            "max_age": config.max_age,
            "min_hp_repro": config.min_hp_repro,
            "hp_cost_repro": config.hp_cost_repro,
            "min_age_repro": config.min_age_repro,
            "offspring_hp": config.offspring_hp,
            "collect_cap": config.collect_cap,
            "message_max_length": config.message_max_length,
            "memory_cap_bytes": config.memory_cap_bytes,
            "metabolic_cost_per_step": config.metabolic_cost_per_step,
        },
        moral_types_visible=visible,
        decision_subject=copy.deepcopy(decision_subject),
        window_start=window_start,
    )


def _split_history(
    state: "WorldState", agent_id: str, family: Set[str], window_start: int
) -> Dict[str, List[Dict[str, Any]]]:
    """Route windowed events into the four perception channels.

    Family news covers births, deaths, and HP-affecting events where a family
    member is the actor or a target.
    """
    events = _window_events(state, window_start)

    my_prey: Set[str] = set()
    for event in events:
        if event.kind == ActionKind.HUNT.value and event.actor_id == agent_id:
            my_prey.update(event.targets)

    mine: List[Dict[str, Any]] = []
    others: List[Dict[str, Any]] = []
    family_news: List[Dict[str, Any]] = []
    hunting: List[Dict[str, Any]] = []

    for event in events:
        touched = set(event.targets) | _allocation_recipients(event) | {event.actor_id}
        if event.is_decision:
            if agent_id in touched:
                if event.kind != ActionKind.DO_NOTHING.value:
                    mine.append(render_event(event))
            elif event.kind not in _QUIET_ACTIONS:
                others.append(render_event(event))
            if family & touched and (
                event.kind in _HP_ACTIONS and (event.hp_deltas or event.kind == "reproduce")
            ):
                family_news.append(render_event(event))
            if event.kind == ActionKind.HUNT.value and my_prey & set(event.targets):
                hunting.append(render_event(event))
        elif event.kind == SystemEventKind.DEATH.value:
            others.append(render_event(event))
            if family & set(event.targets):
                family_news.append(render_event(event))
        elif event.kind == SystemEventKind.PREY_SPAWN.value and event.step > 0:
            others.append(render_event(event))

    return {
        "my_interactions": mine,
        "others_and_environment": others,
        "family_news": family_news,
        "hunting_activity": hunting,
    }
