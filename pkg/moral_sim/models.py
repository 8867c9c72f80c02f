"""
Shared data models for moral-sim.

Contains the enums, the mutable state records owned by the world (agents, plants,
prey), the append-only EventRecord, and the PolicyBackend protocol every decision
engine implements.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    FrozenSet,
    List,
    Optional,
    Protocol,
    Tuple,
    runtime_checkable,
)

if TYPE_CHECKING:
    from moral_sim.cognition.observation import ObservationBundle
    from moral_sim.cognition.schema import PolicyResponse

ENVIRONMENT_ID = "environment"


class MoralType(str, Enum):
    """The four fixed agent dispositions."""

    UNIVERSAL = "universal"
    RECIPROCAL = "reciprocal"
    KIN = "kin"
    SELFISH = "selfish"

    @classmethod
    def ordered(cls) -> Tuple["MoralType", ...]:
        """Canonical order used for rows and columns of every per-type table."""
        return (cls.UNIVERSAL, cls.RECIPROCAL, cls.KIN, cls.SELFISH)


class ActionKind(str, Enum):
    COLLECT = "collect"
    HUNT = "hunt"
    REPRODUCE = "reproduce"
    ALLOCATE = "allocate"
    COMMUNICATE = "communicate"
    FIGHT = "fight"
    ROB = "rob"
    DO_NOTHING = "do_nothing"


class SystemEventKind(str, Enum):
    """Event kinds emitted by the environment rather than by an agent decision."""

    SPAWN = "spawn"
    PREY_SPAWN = "prey_spawn"
    UPKEEP = "upkeep"
    DEATH = "death"


class RoundKind(str, Enum):
    SOCIAL = "social"
    PRODUCTION = "production"
    ENVIRONMENT = "environment"


SOCIAL_ACTIONS: FrozenSet[ActionKind] = frozenset(
    {
        ActionKind.COMMUNICATE,
        ActionKind.ALLOCATE,
        ActionKind.FIGHT,
        ActionKind.ROB,
        ActionKind.DO_NOTHING,
    }
)
PRODUCTION_ACTIONS: FrozenSet[ActionKind] = frozenset(
    {ActionKind.REPRODUCE, ActionKind.HUNT, ActionKind.COLLECT, ActionKind.DO_NOTHING}
)

# Canonical listing order for legal-action sets shown to policies
ACTION_ORDER: Tuple[ActionKind, ...] = tuple(ActionKind)


class DeathCause(str, Enum):
    STARVATION = "starvation"
    OLD_AGE = "old_age"
    FIGHT = "fight"
    ROB = "rob"
    HUNT = "hunt"
    ACTION_COST = "action_cost"
    CHILDBIRTH = "childbirth"


@dataclass(frozen=True)
class RoundPhase:
    """One sub-step of a full time step."""

    step: int
    round_index: int
    kind: RoundKind
    legal_actions: FrozenSet[ActionKind]

    @property
    def is_social(self) -> bool:
        return self.kind == RoundKind.SOCIAL

    def legal_list(self) -> List[str]:
        return [a.value for a in ACTION_ORDER if a in self.legal_actions]


@dataclass
class AgentState:
    """A single hunter-gatherer."""

    agent_id: str
    moral_type: MoralType
    hp: int
    max_hp: int
    age: int
    physical_ability: float
    parent_id: Optional[str] = None
    children: List[str] = field(default_factory=list)
    alive: bool = True
    memory_doc: Dict[str, Any] = field(default_factory=dict)
    short_term_plan: Dict[str, Any] = field(default_factory=dict)
    birth_step: int = 0
    death_step: Optional[int] = None
    death_cause: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["moral_type"] = self.moral_type.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AgentState":
        data = dict(data)
        data["moral_type"] = MoralType(data["moral_type"])
        data["children"] = list(data.get("children", []))
        return cls(**data)


@dataclass
class PlantNode:
    """A stationary patch of edible units."""

    plant_id: str
    quantity: int
    capacity: int
    nutrition_per_unit: int
    respawn_delay: int
    steps_until_respawn: int = 0

    @property
    def depleted(self) -> bool:
        return self.steps_until_respawn > 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PlantNode":
        return cls(**data)


@dataclass
class PreyAnimal:
    """A huntable animal. Removed from the world when its HP reaches 0."""

    prey_id: str
    hp: int
    max_hp: int
    physical_ability: float
    counter_damage: int
    num_agents_to_kill: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreyAnimal":
        return cls(**data)


@dataclass
class EventRecord:
    """One line of the append-only event log.

    hp_deltas maps every touched entity (agents and prey) to its signed HP change.
    A non-empty failure_reason marks a nullified action.
    """

    seq: int
    step: int
    round_index: int
    phase: str
    actor_id: str
    kind: str
    targets: List[str] = field(default_factory=list)
    parameters: Dict[str, Any] = field(default_factory=dict)
    success: bool = True
    hp_deltas: Dict[str, int] = field(default_factory=dict)
    message: Optional[str] = None
    failure_reason: Optional[str] = None
    draws: List[Dict[str, float]] = field(default_factory=list)

    @property
    def nullified(self) -> bool:
        return self.failure_reason is not None

    @property
    def is_decision(self) -> bool:
        return self.actor_id != ENVIRONMENT_ID

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EventRecord":
        return cls(**data)


@dataclass
class ActionOutcome:
    """A resolved action: its EventRecord plus convenience flags."""

    event: EventRecord
    actor_died: bool = False
    target_died: bool = False
    prey_killed: bool = False
    reward_granted: int = 0
    deliveries: List[str] = field(default_factory=list)

    @property
    def nullified(self) -> bool:
        return self.event.nullified


@runtime_checkable
class PolicyBackend(Protocol):
    """Protocol every decision engine (scripted or LLM) implements."""

    kind: str

    def decide(self, bundle: "ObservationBundle") -> "PolicyResponse": ...
