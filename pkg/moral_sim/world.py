"""
Authoritative simulation state.

WorldState owns the agents, plants, prey, the seeded RNG and the in-memory event
log. All mutation happens on the engine thread. Checkpoints are plain values that
serialize to canonical JSON and restore bit-exactly, RNG included.

RNG draw order (fixed):
    initialization: queue shuffle, then one PA draw per founder, then prey HP draws
    environment update: one uniform per empty prey slot (plus an HP draw per spawn)
    each step: queue reshuffle
    each round: Bernoulli draws of fight/rob/hunt in execution order, and a PA draw
    per newborn
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from moral_sim.cognition.schema import blank_memory_document, blank_short_term_plan
from moral_sim.config import SimulationConfig, config_hash, round_half_up
from moral_sim.errors import CheckpointError
from moral_sim.models import (
    ENVIRONMENT_ID,
    AgentState,
    DeathCause,
    EventRecord,
    MoralType,
    PlantNode,
    PreyAnimal,
    RoundKind,
    SystemEventKind,
)
from moral_sim.responses import SimJSONEncoder

logger = logging.getLogger(__name__)


@dataclass
class WorldState:
    """Single source of truth for a running simulation."""

    config: SimulationConfig
    rng: np.random.Generator
    step: int = 0
    round_index: int = 0
    round_kind: RoundKind = RoundKind.ENVIRONMENT
    agents: Dict[str, AgentState] = field(default_factory=dict)
    plants: Dict[str, PlantNode] = field(default_factory=dict)
    prey: Dict[str, PreyAnimal] = field(default_factory=dict)
    queue: List[str] = field(default_factory=list)
    events: List[EventRecord] = field(default_factory=list)
    next_agent_index: int = 1
    next_prey_index: int = 1
    termination_reason: Optional[str] = None

    # -- queries ------------------------------------------------------------

    def living_agents(self) -> List[AgentState]:
        return [a for a in self.agents.values() if a.alive]

    def living_ids(self) -> List[str]:
        return [a.agent_id for a in self.agents.values() if a.alive]

    def is_alive(self, agent_id: str) -> bool:
        agent = self.agents.get(agent_id)
        return agent is not None and agent.alive

    def population_by_type(self) -> Dict[MoralType, int]:
        counts = {t: 0 for t in MoralType.ordered()}
        for agent in self.living_agents():
            counts[agent.moral_type] += 1
        return counts

    def family_relations(self, agent_id: str) -> Dict[str, str]:
        """Map relative id -> relation for parent, grandparent, siblings, children
        and grandchildren, living or not."""
        agent = self.agents[agent_id]
        family: Dict[str, str] = {}

        def add(other: Optional[str], relation: str) -> None:
            if other and other != agent_id and other not in family and other in self.agents:
                family[other] = relation

        if agent.parent_id:
            add(agent.parent_id, "parent")
            parent = self.agents.get(agent.parent_id)
            if parent is not None:
                add(parent.parent_id, "grandparent")
                for sibling in parent.children:
                    add(sibling, "sibling")
        for child_id in agent.children:
            add(child_id, "child")
            child = self.agents.get(child_id)
            if child is not None:
                for grandchild in child.children:
                    add(grandchild, "grandchild")
        return family

    # -- mutation -----------------------------------------------------------

    def record(
        self,
        actor_id: str,
        kind: str,
        *,
        targets: Iterable[str] = (),
        parameters: Optional[Dict[str, Any]] = None,
        success: bool = True,
        hp_deltas: Optional[Dict[str, int]] = None,
        message: Optional[str] = None,
        failure_reason: Optional[str] = None,
        draws: Optional[List[Dict[str, float]]] = None,
        phase: Optional[str] = None,
    ) -> EventRecord:
        """Append an event to the log and return it."""
        event = EventRecord(
            seq=len(self.events),
            step=self.step,
            round_index=self.round_index,
            phase=phase or self.round_kind.value,
            actor_id=actor_id,
            kind=kind,
            targets=list(targets),
            parameters=dict(parameters or {}),
            success=success,
            hp_deltas={k: int(v) for k, v in (hp_deltas or {}).items() if v != 0},
            message=message,
            failure_reason=failure_reason,
            draws=list(draws or []),
        )
        self.events.append(event)
        return event

    def kill_agent(self, agent_id: str, cause: DeathCause, by: Optional[str] = None) -> None:
        """Mark an agent dead and log the death. Remaining HP (old age) is zeroed."""
        agent = self.agents[agent_id]
        if not agent.alive:
            return
        deltas = {agent_id: -agent.hp} if agent.hp > 0 else {}
        agent.hp = 0
        agent.alive = False
        agent.death_step = self.step
        agent.death_cause = cause.value
        self.record(
            ENVIRONMENT_ID,
            SystemEventKind.DEATH.value,
            targets=[agent_id],
            parameters={"cause": cause.value, "age": agent.age, "by": by},
            hp_deltas=deltas,
            phase=RoundKind.ENVIRONMENT.value,
        )
        logger.debug("%s died at step %d (%s)", agent_id, self.step, cause.value)

    def new_agent_id(self) -> str:
        agent_id = f"agent_{self.next_agent_index}"
        self.next_agent_index += 1
        return agent_id

    def sample_physical_ability(self) -> float:
        value = float(self.rng.normal(self.config.pa_mean, self.config.pa_std))
        return max(0.0, value)

    def add_agent(
        self,
        moral_type: MoralType,
        hp: int,
        age: int,
        physical_ability: float,
        parent_id: Optional[str] = None,
        agent_id: Optional[str] = None,
    ) -> AgentState:
        if agent_id is not None:
            # Explicit ids must not collide with ids handed out later
            suffix = agent_id.rpartition("_")[2]
            if suffix.isdigit():
                self.next_agent_index = max(self.next_agent_index, int(suffix) + 1)
        agent = AgentState(
            agent_id=agent_id or self.new_agent_id(),
            moral_type=moral_type,
            hp=hp,
            max_hp=self.config.max_hp,
            age=age,
            physical_ability=physical_ability,
            parent_id=parent_id,
            memory_doc=blank_memory_document(),
            short_term_plan=blank_short_term_plan(),
            birth_step=self.step,
        )
        self.agents[agent.agent_id] = agent
        if parent_id is not None:
            self.agents[parent_id].children.append(agent.agent_id)
        return agent

    def spawn_prey(self) -> PreyAnimal:
        params = self.config.prey_params
        sampled = float(self.rng.normal(params.hp_mean, params.hp_std))
        max_hp = max(1, round_half_up(sampled * params.difficulty))
        prey = PreyAnimal(
            prey_id=f"prey_{self.next_prey_index}",
            hp=max_hp,
            max_hp=max_hp,
            physical_ability=params.physical_ability,
            counter_damage=params.counter_damage,
            num_agents_to_kill=self.config.agents_to_kill(max_hp),
        )
        self.next_prey_index += 1
        self.prey[prey.prey_id] = prey
        self.record(
            ENVIRONMENT_ID,
            SystemEventKind.PREY_SPAWN.value,
            targets=[prey.prey_id],
            parameters={"max_hp": max_hp, "physical_ability": prey.physical_ability},
            hp_deltas={prey.prey_id: max_hp},
            phase=RoundKind.ENVIRONMENT.value,
        )
        return prey

    def reshuffle_queue(self) -> List[str]:
        ids = self.living_ids()
        order = self.rng.permutation(len(ids))
        self.queue = [ids[i] for i in order]
        return self.queue


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def allocate_moral_types(distribution: Dict[MoralType, float], count: int) -> List[MoralType]:
    """Split a population across moral types by largest-remainder rounding."""
    ordered = MoralType.ordered()
    quotas = [distribution.get(t, 0.0) * count for t in ordered]
    whole = [math.floor(q) for q in quotas]
    remainder = count - sum(whole)
    by_fraction = sorted(range(len(ordered)), key=lambda i: (-(quotas[i] - whole[i]), i))
    for i in by_fraction[:remainder]:
        whole[i] += 1
    types: List[MoralType] = []
    for moral_type, n in zip(ordered, whole):
        types.extend([moral_type] * n)
    return types


def initialize_world(config: SimulationConfig) -> WorldState:
    """Build step 0: founders, plants and prey, and the first execution queue."""
    state = WorldState(config=config, rng=np.random.default_rng(config.rng_seed))

    types = allocate_moral_types(config.type_distribution, config.initial_agent_count)
    founder_ids = [state.new_agent_id() for _ in types]
    order = state.rng.permutation(len(founder_ids))
    abilities = [state.sample_physical_ability() for _ in founder_ids]

    for agent_id, moral_type, ability in zip(founder_ids, types, abilities):
        state.add_agent(
            moral_type,
            hp=config.initial_hp,
            age=config.initial_age,
            physical_ability=ability,
            agent_id=agent_id,
        )
        state.record(
            ENVIRONMENT_ID,
            SystemEventKind.SPAWN.value,
            targets=[agent_id],
            parameters={
                "moral_type": moral_type.value,
                "age": config.initial_age,
                "physical_ability": ability,
                "parent_id": None,
            },
            hp_deltas={agent_id: config.initial_hp},
        )
    state.queue = [founder_ids[i] for i in order]
    populate_resources(state)

    logger.info(
        "Initialized world: %d agents, %d plants, %d prey (seed %d)",
        len(state.agents),
        len(state.plants),
        len(state.prey),
        config.rng_seed,
    )
    return state


def populate_resources(state: WorldState) -> None:
    """Create the plant nodes and the initial prey for a fresh world."""
    config = state.config
    plant = config.plant_params
    for n in range(1, config.plant_node_count + 1):
        state.plants[f"plant_{n}"] = PlantNode(
            plant_id=f"plant_{n}",
            quantity=plant.initial_quantity,
            capacity=plant.capacity,
            nutrition_per_unit=plant.nutrition,
            respawn_delay=plant.respawn_delay,
        )
    for _ in range(config.prey_initial_count):
        state.spawn_prey()


# ---------------------------------------------------------------------------
# Per-step environment update
# ---------------------------------------------------------------------------


def environment_update(state: WorldState) -> WorldState:
    """Advance resources and agent upkeep for the current step.

    Order: plants, prey spawn, prey removal, metabolic cost, aging and death.
    """
    config = state.config

    for plant in state.plants.values():
        if plant.steps_until_respawn > 0:
            plant.steps_until_respawn -= 1
            if plant.steps_until_respawn == 0:
                plant.quantity = plant.capacity
        elif plant.quantity < plant.capacity:
            plant.quantity += 1

    empty_slots = config.prey_max_count - len(state.prey)
    for _ in range(max(0, empty_slots)):
        if state.rng.random() < config.prey_params.respawn_rate:
            state.spawn_prey()

    for prey_id in [p.prey_id for p in state.prey.values() if p.hp <= 0]:
        del state.prey[prey_id]

    upkeep: Dict[str, int] = {}
    if config.metabolic_cost_per_step > 0:
        for agent in state.living_agents():
            cost = min(config.metabolic_cost_per_step, agent.hp)
            agent.hp -= cost
            upkeep[agent.agent_id] = -cost
        state.record(
            ENVIRONMENT_ID,
            SystemEventKind.UPKEEP.value,
            targets=list(upkeep),
            parameters={"metabolic_cost": config.metabolic_cost_per_step},
            hp_deltas=upkeep,
            phase=RoundKind.ENVIRONMENT.value,
        )

    for agent in state.living_agents():
        agent.age += 1
    for agent in state.living_agents():
        if agent.hp <= 0:
            state.kill_agent(agent.agent_id, DeathCause.STARVATION)
        elif agent.age > config.max_age:
            state.kill_agent(agent.agent_id, DeathCause.OLD_AGE)
    return state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to continue a run, minus the event log itself."""

    config_hash: str
    step: int
    round_index: int
    event_count: int
    rng_state: Dict[str, Any]
    agents: List[Dict[str, Any]]
    plants: List[Dict[str, Any]]
    prey: List[Dict[str, Any]]
    queue: List[str]
    next_agent_index: int
    next_prey_index: int
    termination_reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "step": self.step,
            "round_index": self.round_index,
            "event_count": self.event_count,
            "rng_state": self.rng_state,
            "agents": self.agents,
            "plants": self.plants,
            "prey": self.prey,
            "queue": self.queue,
            "next_agent_index": self.next_agent_index,
            "next_prey_index": self.next_prey_index,
            "termination_reason": self.termination_reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, cls=SimJSONEncoder)

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        try:
            data = json.loads(text)
            return cls(**data)
        except (json.JSONDecodeError, TypeError) as e:
            raise CheckpointError(f"Corrupt checkpoint: {e}") from None


def snapshot(state: WorldState) -> Checkpoint:
    return Checkpoint(
        config_hash=config_hash(state.config),
        step=state.step,
        round_index=state.round_index,
        event_count=len(state.events),
        rng_state=state.rng.bit_generator.state,
        agents=[a.to_dict() for a in state.agents.values()],
        plants=[p.to_dict() for p in state.plants.values()],
        prey=[p.to_dict() for p in state.prey.values()],
        queue=list(state.queue),
        next_agent_index=state.next_agent_index,
        next_prey_index=state.next_prey_index,
        termination_reason=state.termination_reason,
    )


def restore(
    checkpoint: Checkpoint,
    config: SimulationConfig,
    events: Optional[List[EventRecord]] = None,
) -> WorldState:
    """Rebuild a WorldState from a checkpoint.

    Args:
        checkpoint: Snapshot to restore.
        config: The run's config; its hash must match the checkpoint.
        events: The run's event log. Entries past the checkpoint's cursor are dropped.

    Raises:
        CheckpointError: On hash mismatch or a log shorter than the cursor.
    """
    expected = config_hash(config)
    if checkpoint.config_hash != expected:
        raise CheckpointError(
            f"Checkpoint config hash {checkpoint.config_hash[:12]} does not match "
            f"config hash {expected[:12]}. Resume with the run's own config."
        )
    log = list(events or [])
    if len(log) < checkpoint.event_count:
        raise CheckpointError(
            f"Event log has {len(log)} records but the checkpoint expects "
            f"{checkpoint.event_count}. The archive is incomplete."
        )

    rng = np.random.Generator(np.random.PCG64())
    try:
        rng.bit_generator.state = checkpoint.rng_state
        agents = [AgentState.from_dict(a) for a in checkpoint.agents]
        plants = [PlantNode.from_dict(p) for p in checkpoint.plants]
        prey = [PreyAnimal.from_dict(p) for p in checkpoint.prey]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Corrupt checkpoint: {e}") from None

    return WorldState(
        config=config,
        rng=rng,
        step=checkpoint.step,
        round_index=checkpoint.round_index,
        round_kind=RoundKind.ENVIRONMENT,
        agents={a.agent_id: a for a in agents},
        plants={p.plant_id: p for p in plants},
        prey={p.prey_id: p for p in prey},
        queue=list(checkpoint.queue),
        events=log[: checkpoint.event_count],
        next_agent_index=checkpoint.next_agent_index,
        next_prey_index=checkpoint.next_prey_index,
        termination_reason=checkpoint.termination_reason,
    )
