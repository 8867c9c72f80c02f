"""
Policy response schema.

Field names follow the output-content contract agents are prompted with: agent_id,
thinking, long_term_memory (five mandatory sections), short_term_plan and action.
Layer-1 validation of a response is exactly `PolicyResponse.model_validate`.
"""

from __future__ import annotations

import json
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from moral_sim.errors import ResponseFormatError
from moral_sim.models import ActionKind

NO_CONTENT = "no content yet"
THINKING_MAX_WORDS = 500

RETALIATION_STAGES = (
    "closed_with_fair_share",
    "keep_hunting",
    "wait_and_ask_for_sharing",
    "warn_and_plan_for_retaliation",
    "execute_retaliation",
    "finished_retaliation",
    "give_up_retaliation",
)

RetaliationStage = Literal[
    "closed_with_fair_share",
    "keep_hunting",
    "wait_and_ask_for_sharing",
    "warn_and_plan_for_retaliation",
    "execute_retaliation",
    "finished_retaliation",
    "give_up_retaliation",
    "",
    "no content yet",
]

PREY_MEMORY_KEY = "Prey_Hunting_Collaboration_Distribution_Retaliation_Memory_And_Planning"
AGENT_MEMORY_KEY = "Agent_Specific_Memory"
FAMILY_PLAN_KEY = "Family_Plan"
REPRODUCTION_PLAN_KEY = "Plan_For_Reproduction"
STRATEGIES_KEY = "Strategies"
MEMORY_SECTIONS = (
    PREY_MEMORY_KEY,
    AGENT_MEMORY_KEY,
    FAMILY_PLAN_KEY,
    REPRODUCTION_PLAN_KEY,
    STRATEGIES_KEY,
)

Scalar = Union[bool, int, float, str]


class _Lenient(BaseModel):
    """Nested memory entries: named subfields are typed, extra subfields are kept."""

    model_config = ConfigDict(extra="allow", populate_by_name=True)


# ---------------------------------------------------------------------------
# Prey-based cognition
# ---------------------------------------------------------------------------


class HuntFact(_Lenient):
    time_step: Union[int, str] = ""
    result: str = ""
    damage: Union[int, str] = ""
    if_killed: Union[bool, str] = ""


class ObjectionEntry(_Lenient):
    why: str = ""
    ignore_or_follow: str = ""
    if_he_hunted_do_I_share: Union[bool, str] = ""


class PreKillPlanning(_Lenient):
    amount_of_reward: Union[int, str] = ""
    who_communicated_to_hunt_together: Union[List[str], str] = Field(default_factory=list)
    who_I_want_to_collaborate: Union[List[str], str] = Field(default_factory=list)
    mutually_confirmed_agents_for_collaboration: Union[List[str], str] = Field(
        default_factory=list
    )
    anyone_wants_me_to_not_hunt_this_prey: Union[Dict[str, ObjectionEntry], str] = ""
    my_own_distribution_plan: Union[Dict[str, Any], str] = ""


class PostKillDistribution(_Lenient):
    time_step_killed_prey: Union[int, str] = ""
    winner: str = ""
    reward_redistributed_yet: Union[bool, str] = ""
    time_passed_unallocated: Union[int, str] = ""
    judge_if_winner_still_planning_to_share: str = ""
    actual_reward_allocation_by_winner: Union[Dict[str, Scalar], str] = ""
    evaluating_the_redistribution: str = ""
    is_fair_allocation_by_winner: Union[bool, str] = ""
    free_rider_winner: Union[bool, str] = ""


class RetaliationPlan(_Lenient):
    collaboration_plan: Union[List[str], str] = ""
    retaliation_method: Literal["rob", "fight", ""] = ""
    retaliation_goal: str = ""


class PlanNext(_Lenient):
    thinking: str = ""
    stage: RetaliationStage = ""
    plan: str = ""
    retaliation_plan: Union[RetaliationPlan, str] = ""


class AfterwardHappenings(_Lenient):
    thinking: str = ""
    retaliation_events: Union[Dict[str, str], str] = ""
    other_events: str = ""


class PreyMemory(_Lenient):
    hunt_fact_history_of_this_prey: Union[Dict[str, HuntFact], str]
    communication_and_planning_before_killing_prey: Union[PreKillPlanning, str]
    distribution_after_killing_prey: Union[PostKillDistribution, str]
    plan_next: Union[PlanNext, str]
    afterward_happenings: Union[AfterwardHappenings, str]
    lessons_learned: str = ""


# ---------------------------------------------------------------------------
# Agent-based cognition, family, reproduction
# ---------------------------------------------------------------------------


class InteractionEntry(_Lenient):
    action_type: Literal["fight", "rob", "allocate"]
    if_success: Union[bool, str] = ""
    reason: str = ""
    target_moral_type: str = ""


InteractionLog = Union[InteractionEntry, List[InteractionEntry], Dict[str, InteractionEntry], str]


class InteractionHistory(_Lenient):
    what_i_did_to_him: InteractionLog = NO_CONTENT
    what_he_did_to_me: InteractionLog = NO_CONTENT


class AgentMemory(_Lenient):
    important_interaction_history: Union[InteractionHistory, str] = NO_CONTENT
    thinking: str = ""
    moral_type: str = ""
    relationship: str = ""
    agreement: str = ""
    plan: str = ""


class FamilyPlanEntry(_Lenient):
    status: str = ""
    plan: str = ""


class ReproductionPlan(_Lenient):
    thinking: str = ""
    preconditions_and_subgoals: str = ""
    estimated_time_to_produce_next_child: Union[int, str] = ""


class MemoryDocument(BaseModel):
    """The five mandatory long-term memory sections."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    prey_hunting_memory: Union[Dict[str, PreyMemory], str] = Field(alias=PREY_MEMORY_KEY)
    agent_specific_memory: Union[Dict[str, AgentMemory], str] = Field(alias=AGENT_MEMORY_KEY)
    family_plan: Union[Dict[str, FamilyPlanEntry], str] = Field(alias=FAMILY_PLAN_KEY)
    plan_for_reproduction: Union[ReproductionPlan, str] = Field(alias=REPRODUCTION_PLAN_KEY)
    strategies: Union[str, List[str], Dict[str, Any]] = Field(alias=STRATEGIES_KEY)


class ShortTermPlan(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    reasoning: str = Field(default="", alias="reasoning_for_prioritizing_plans_and_goals")
    next_steps_plan: Union[str, List[str], Dict[str, Any]] = ""


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

_PAYLOAD_FIELDS = ("target", "allocation_plan", "quantity", "message", "recipients", "intent")

# kind -> (required payload fields, allowed payload fields)
_ACTION_FIELDS: Dict[ActionKind, tuple] = {
    ActionKind.COLLECT: ({"target", "quantity"}, {"target", "quantity"}),
    ActionKind.HUNT: ({"target"}, {"target"}),
    ActionKind.REPRODUCE: (set(), set()),
    ActionKind.ALLOCATE: ({"allocation_plan"}, {"allocation_plan"}),
    ActionKind.COMMUNICATE: ({"message", "recipients"}, {"message", "recipients", "intent"}),
    ActionKind.FIGHT: ({"target"}, {"target"}),
    ActionKind.ROB: ({"target", "quantity"}, {"target", "quantity"}),
    ActionKind.DO_NOTHING: (set(), set()),
}


class ActionRequest(BaseModel):
    """A decision as submitted by a policy.

    quantity is q_req for collect and h_rob,req for rob. intent marks a
    communicate as a collaboration invite or decline.
    """

    model_config = ConfigDict(extra="forbid")

    kind: ActionKind
    actor_id: Optional[str] = None
    target: Optional[str] = None
    allocation_plan: Optional[Dict[str, PositiveInt]] = None
    quantity: Optional[PositiveInt] = None
    message: Optional[str] = None
    recipients: Optional[List[str]] = None
    intent: Optional[Literal["invite", "decline"]] = None

    @model_validator(mode="after")
    def _fields_match_kind(self) -> "ActionRequest":
        required, allowed = _ACTION_FIELDS[self.kind]
        present = {name for name in _PAYLOAD_FIELDS if getattr(self, name) is not None}
        missing = sorted(required - present)
        if missing:
            raise ValueError(f"{self.kind.value} requires {', '.join(missing)}")
        extra = sorted(present - allowed)
        if extra:
            raise ValueError(f"{self.kind.value} does not take {', '.join(extra)}")
        if self.allocation_plan is not None and not self.allocation_plan:
            raise ValueError("allocation_plan must name at least one recipient")
        return self

    @property
    def total_allocation(self) -> int:
        return sum((self.allocation_plan or {}).values())


# ---------------------------------------------------------------------------
# Full response
# ---------------------------------------------------------------------------


class PolicyResponse(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    agent_id: str
    thinking: str
    long_term_memory: MemoryDocument
    short_term_plan: ShortTermPlan
    action: ActionRequest

    @field_validator("thinking")
    @classmethod
    def _thinking_word_cap(cls, value: str) -> str:
        words = len(value.split())
        if words > THINKING_MAX_WORDS:
            raise ValueError(f"thinking has {words} words, maximum is {THINKING_MAX_WORDS}")
        return value

    @model_validator(mode="after")
    def _action_belongs_to_agent(self) -> "PolicyResponse":
        if self.action.actor_id is None:
            self.action.actor_id = self.agent_id
        elif self.action.actor_id != self.agent_id:
            raise ValueError(
                f"action.actor_id {self.action.actor_id} does not match agent_id {self.agent_id}"
            )
        return self

    def to_document(self) -> Dict[str, Any]:
        """Serialize with the agent-facing field names."""
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)

    def memory_document(self) -> Dict[str, Any]:
        return self.long_term_memory.model_dump(mode="json", by_alias=True, exclude_none=True)

    def plan_document(self) -> Dict[str, Any]:
        return self.short_term_plan.model_dump(mode="json", by_alias=True, exclude_none=True)


def blank_memory_document() -> Dict[str, Any]:
    return {section: NO_CONTENT for section in MEMORY_SECTIONS}


def blank_short_term_plan() -> Dict[str, Any]:
    return {
        "reasoning_for_prioritizing_plans_and_goals": NO_CONTENT,
        "next_steps_plan": NO_CONTENT,
    }


def policy_response_json_schema() -> Dict[str, Any]:
    return PolicyResponse.model_json_schema(by_alias=True)


# ---------------------------------------------------------------------------
# Layer 1: parsing model output
# ---------------------------------------------------------------------------


def extract_json_object(text: str) -> Dict[str, Any]:
    """Parse the outermost {...} in text, ignoring prose around it."""
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end <= start:
        raise ResponseFormatError("Response contains no JSON object")
    try:
        data = json.loads(text[start : end + 1])
    except json.JSONDecodeError as e:
        raise ResponseFormatError(f"Response is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ResponseFormatError("Response JSON must be an object")
    return data


def describe_validation_error(exc: ValidationError, limit: int = 5) -> str:
    parts = []
    for err in exc.errors()[:limit]:
        loc = ".".join(str(p) for p in err.get("loc", ())) or "response"
        msg = err.get("msg", "invalid")
        parts.append(f"{loc}: {msg}")
    more = len(exc.errors()) - limit
    if more > 0:
        parts.append(f"... and {more} more")
    return "; ".join(parts)


def parse_policy_response(text: str) -> PolicyResponse:
    """Layer-1 validation: JSON syntax plus schema.

    Raises:
        ResponseFormatError: With a human-readable list of problems.
    """
    data = extract_json_object(text)
    try:
        return PolicyResponse.model_validate(data)
    except ValidationError as e:
        raise ResponseFormatError(describe_validation_error(e)) from None
