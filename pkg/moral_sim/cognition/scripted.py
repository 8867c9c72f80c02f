"""
Scripted policy backends.

Deterministic, seed-independent rule sets, one per moral type. They exercise the
engine mechanics without a model and are the reference behaviour for tests and
mini-game fixtures. The rule tables are documented in docs/scripted-policies.md.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

from moral_sim.cognition.observation import ObservationBundle
from moral_sim.cognition.schema import (
    AGENT_MEMORY_KEY,
    FAMILY_PLAN_KEY,
    NO_CONTENT,
    PREY_MEMORY_KEY,
    REPRODUCTION_PLAN_KEY,
    STRATEGIES_KEY,
    ActionRequest,
    MemoryDocument,
    PolicyResponse,
    ShortTermPlan,
)
from moral_sim.models import ActionKind, MoralType, RoundKind

logger = logging.getLogger(__name__)

# Thresholds shared by every scripted type
SURPLUS_MARGIN = 5  # surplus means hp > min_hp_repro + SURPLUS_MARGIN
DANGER_HP = 8
COMFORT_HP = 20
GIFT_CAP = 10
STARVING_HP = 8
ROB_AMOUNT = 4
REPRO_BUFFER = 4

Choice = Tuple[ActionRequest, str]


def interaction_balance(bundle: ObservationBundle) -> Dict[str, int]:
    """Net HP other agents have given (positive) or taken (negative) within the window."""
    me = bundle.agent_id
    balance: Dict[str, int] = {}
    for event in bundle.history["my_interactions"]:
        actor = event["actor"]
        if actor == me or event.get("failure_reason"):
            continue
        if event["action"] == ActionKind.ALLOCATE.value:
            amount = event.get("details", {}).get("plan", {}).get(me, 0)
            balance[actor] = balance.get(actor, 0) + amount
        elif event["action"] in (ActionKind.FIGHT.value, ActionKind.ROB.value):
            harm = -event["hp_changes"].get(me, 0)
            balance[actor] = balance.get(actor, 0) - max(1, harm)
    return balance


class _View:
    """Derived quantities the rule tables are written against."""

    def __init__(self, bundle: ObservationBundle):
        self.bundle = bundle
        self.me = bundle.agent_id
        self.rules = bundle.rules
        self.hp = bundle.hp
        self.family = set(bundle.family_ids())
        self.others = bundle.other_agents
        self.balance = interaction_balance(bundle)

    @property
    def surplus_threshold(self) -> int:
        return self.rules["min_hp_repro"] + SURPLUS_MARGIN

    @property
    def has_surplus(self) -> bool:
        return self.hp > self.surplus_threshold

    @property
    def starving(self) -> bool:
        return self.hp <= STARVING_HP

    def gift_for(self, target: Dict[str, Any]) -> int:
        return max(
            0,
            min(
                self.hp - self.surplus_threshold,
                COMFORT_HP - target["hp"],
                GIFT_CAP,
                self.rules["max_hp"] - target["hp"],
            ),
        )

    def is_family(self, other: Dict[str, Any]) -> bool:
        return other["agent_id"] in self.family

    @staticmethod
    def weakest(candidates: List[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
        if not candidates:
            return None
        return min(candidates, key=lambda o: o["hp"])

    def robbable(self, candidates: List[Dict[str, Any]]) -> Optional[Tuple[Dict[str, Any], int]]:
        if self.hp < 2:
            return None
        target = self.weakest([o for o in candidates if o["hp"] >= 1])
        if target is None:
            return None
        return target, min(ROB_AMOUNT, target["hp"])

    def trusted(self, other: Dict[str, Any]) -> bool:
        """Positive net balance of HP given to me within the perception window."""
        return self.balance.get(other["agent_id"], 0) > 0


def _request(actor_id: str, kind: ActionKind, **payload: Any) -> ActionRequest:
    return ActionRequest(kind=kind, actor_id=actor_id, **payload)


class ScriptedPolicy:
    """Rule-based backend for a single moral type."""

    kind = "scripted"
    moral_type: MoralType = MoralType.UNIVERSAL

    def decide(self, bundle: ObservationBundle) -> PolicyResponse:
        view = _View(bundle)
        subject = bundle.decision_subject
        if subject is not None:
            action, reason = self.answer(view, subject)
        elif bundle.round_kind == RoundKind.PRODUCTION.value:
            action, reason = self.produce(view)
        else:
            action, reason = self.socialize(view)

        return PolicyResponse(
            agent_id=bundle.agent_id,
            thinking=f"Step {bundle.step}, round {bundle.round_index}, HP {view.hp}. {reason}",
            long_term_memory=MemoryDocument.model_validate(self.memory(view)),
            short_term_plan=ShortTermPlan(
                reasoning=reason,
                next_steps_plan=self.outlook(view),
            ),
            action=action,
        )

    # -- production round, shared by all types ------------------------------

    def produce(self, view: _View) -> Choice:
        status = view.bundle.self_status["reproduction"]
        if status["eligible"] and view.hp >= view.rules["min_hp_repro"] + REPRO_BUFFER:
            return _request(view.me, ActionKind.REPRODUCE), "Healthy enough to raise a child"

        plants = [
            p
            for p in view.bundle.environment["plants"]
            if p["quantity"] > 0 and p["steps_until_respawn"] == 0
        ]
        if plants and view.hp < view.rules["max_hp"]:
            plant = max(plants, key=lambda p: p["quantity"])
            quantity = min(view.rules["collect_cap"], plant["quantity"])
            return (
                _request(view.me, ActionKind.COLLECT, target=plant["plant_id"], quantity=quantity),
                f"Collecting {quantity} from {plant['plant_id']}",
            )

        prey = view.bundle.environment["prey"]
        if prey:
            target = min(prey, key=lambda p: p["hp"])
            if view.hp > target["counter_damage"] + 1:
                return (
                    _request(view.me, ActionKind.HUNT, target=target["prey_id"]),
                    f"Hunting {target['prey_id']}",
                )
        return _request(view.me, ActionKind.DO_NOTHING), "Nothing worth doing this round"

    # -- social round, per type ---------------------------------------------

    def socialize(self, view: _View) -> Choice:
        return _request(view.me, ActionKind.DO_NOTHING), "Waiting"

    # -- mini-game decision subjects ----------------------------------------

    def would_invite(self, view: _View, receiver: Dict[str, Any]) -> bool:
        return False

    def would_give(self, view: _View, target: Dict[str, Any]) -> bool:
        return False

    def answer(self, view: _View, subject: Dict[str, Any]) -> Choice:
        subject_kind = subject.get("kind")
        if subject_kind == "invitation":
            receiver = view.bundle.other(subject.get("receiver", ""))
            if receiver is not None and self.would_invite(view, receiver):
                return (
                    _request(
                        view.me,
                        ActionKind.COMMUNICATE,
                        recipients=[receiver["agent_id"]],
                        message="Join me to hunt prey this step",
                        intent="invite",
                    ),
                    f"Inviting {receiver['agent_id']} to hunt",
                )
            if receiver is not None:
                return (
                    _request(
                        view.me,
                        ActionKind.COMMUNICATE,
                        recipients=[receiver["agent_id"]],
                        message="Not this time",
                        intent="decline",
                    ),
                    f"Not inviting {receiver['agent_id']}",
                )
        elif subject_kind == "allocation":
            target = view.bundle.other(subject.get("target", ""))
            if target is not None and self.would_give(view, target):
                amount = view.gift_for(target)
                if amount > 0:
                    return (
                        _request(
                            view.me,
                            ActionKind.ALLOCATE,
                            allocation_plan={target["agent_id"]: amount},
                        ),
                        f"Giving {amount} HP to {target['agent_id']}",
                    )
        return _request(view.me, ActionKind.DO_NOTHING), "Keeping my HP"

    # -- memory --------------------------------------------------------------

    def strategy(self) -> str:
        return "Keep HP up through collecting and hunting"

    def outlook(self, view: _View) -> str:
        if view.has_surplus:
            return "Spend surplus HP according to my values"
        return "Rebuild HP before anything else"

    def memory(self, view: _View) -> Dict[str, Any]:
        agents: Any = NO_CONTENT
        if view.others:
            agents = {}
            for other in view.others:
                balance = view.balance.get(other["agent_id"], 0)
                if view.is_family(other):
                    relationship = "family"
                elif balance > 0:
                    relationship = "ally"
                elif balance < 0:
                    relationship = "enemy"
                else:
                    relationship = "neutral"
                agents[other["agent_id"]] = {
                    "important_interaction_history": NO_CONTENT,
                    "thinking": f"net balance {balance}",
                    "moral_type": other.get("moral_type", "unknown"),
                    "relationship": relationship,
                    "agreement": "",
                    "plan": "",
                }

        family: Any = NO_CONTENT
        if view.bundle.self_status["family"]:
            family = {
                member["agent_id"]: {
                    "status": f"{member['relation']} with {member['hp']} HP",
                    "plan": "help if in danger" if member["hp"] < DANGER_HP else "watch",
                }
                for member in view.bundle.self_status["family"]
            }

        prey_memory: Any = NO_CONTENT
        hunts = view.bundle.history["hunting_activity"]
        if hunts:
            prey_memory = {}
            for event in hunts:
                for prey_id in event["targets"]:
                    entry = prey_memory.setdefault(
                        prey_id,
                        {
                            "hunt_fact_history_of_this_prey": {},
                            "communication_and_planning_before_killing_prey": NO_CONTENT,
                            "distribution_after_killing_prey": NO_CONTENT,
                            "plan_next": NO_CONTENT,
                            "afterward_happenings": NO_CONTENT,
                        },
                    )
                    details = event.get("details", {})
                    entry["hunt_fact_history_of_this_prey"][event["actor"]] = {
                        "time_step": event["step"],
                        "result": "hit" if event["success"] else "missed",
                        "damage": details.get("damage", 0),
                        "if_killed": bool(details.get("killed", False)),
                    }

        status = view.bundle.self_status["reproduction"]
        return {
            PREY_MEMORY_KEY: prey_memory,
            AGENT_MEMORY_KEY: agents,
            FAMILY_PLAN_KEY: family,
            REPRODUCTION_PLAN_KEY: {
                "thinking": "eligible" if status["eligible"] else "not yet eligible",
                "preconditions_and_subgoals": (
                    f"age {view.rules['min_age_repro']} and HP "
                    f"{view.rules['min_hp_repro'] + REPRO_BUFFER}"
                ),
                "estimated_time_to_produce_next_child": "" if status["eligible"] else "unknown",
            },
            STRATEGIES_KEY: self.strategy(),
        }


class SelfishPolicy(ScriptedPolicy):
    """Maximize own HP; rob the weakest other agent when starving; never give."""

    moral_type = MoralType.SELFISH

    def socialize(self, view: _View) -> Choice:
        if view.starving:
            pick = view.robbable(view.others)
            if pick is not None:
                target, amount = pick
                return (
                    _request(view.me, ActionKind.ROB, target=target["agent_id"], quantity=amount),
                    f"Starving, robbing {target['agent_id']}",
                )
        return super().socialize(view)

    def would_invite(self, view: _View, receiver: Dict[str, Any]) -> bool:
        return receiver["physical_ability"] >= view.bundle.self_status["physical_ability"]

    def strategy(self) -> str:
        return "Look after myself and my own offspring count only"


class KinPolicy(ScriptedPolicy):
    """Give surplus HP to the weakest family member; never harm anyone."""

    moral_type = MoralType.KIN

    def socialize(self, view: _View) -> Choice:
        relatives = [o for o in view.others if view.is_family(o)]
        if view.has_surplus:
            weakest = view.weakest(relatives)
            if weakest is not None:
                amount = view.gift_for(weakest)
                if amount > 0:
                    return (
                        _request(
                            view.me,
                            ActionKind.ALLOCATE,
                            allocation_plan={weakest["agent_id"]: amount},
                        ),
                        f"Sharing surplus with family member {weakest['agent_id']}",
                    )
        if view.bundle.round_index == 0 and relatives:
            return (
                _request(
                    view.me,
                    ActionKind.COMMUNICATE,
                    recipients=[o["agent_id"] for o in relatives],
                    message=f"Family check in, I have {view.hp} HP",
                ),
                "Checking on family",
            )
        return super().socialize(view)

    def would_invite(self, view: _View, receiver: Dict[str, Any]) -> bool:
        return view.is_family(receiver)

    def would_give(self, view: _View, target: Dict[str, Any]) -> bool:
        return view.is_family(target)

    def strategy(self) -> str:
        return "Family first, outsiders only when it helps the family"


class ReciprocalPolicy(ScriptedPolicy):
    """Give surplus HP back to agents who have given more than they took."""

    moral_type = MoralType.RECIPROCAL

    def socialize(self, view: _View) -> Choice:
        partners = [o for o in view.others if view.trusted(o)]
        if view.has_surplus:
            needy = view.weakest(partners)
            if needy is not None:
                amount = view.gift_for(needy)
                if amount > 0:
                    return (
                        _request(
                            view.me,
                            ActionKind.ALLOCATE,
                            allocation_plan={needy["agent_id"]: amount},
                        ),
                        f"Returning support to {needy['agent_id']}",
                    )
        if view.bundle.round_index == 0 and partners:
            return (
                _request(
                    view.me,
                    ActionKind.COMMUNICATE,
                    recipients=[o["agent_id"] for o in partners],
                    message="Let us hunt together and share the reward fairly",
                    intent="invite",
                ),
                "Inviting proven partners",
            )
        return super().socialize(view)

    def would_invite(self, view: _View, receiver: Dict[str, Any]) -> bool:
        return view.balance.get(receiver["agent_id"], 0) >= 0

    def would_give(self, view: _View, target: Dict[str, Any]) -> bool:
        return view.trusted(target)

    def strategy(self) -> str:
        return "Cooperate with those who have cooperated with me"


class UniversalPolicy(ScriptedPolicy):
    """Give surplus to whoever is weakest; never harm anyone."""

    moral_type = MoralType.UNIVERSAL

    def socialize(self, view: _View) -> Choice:
        if view.has_surplus:
            needy = view.weakest([o for o in view.others if o["hp"] < COMFORT_HP])
            if needy is not None:
                amount = view.gift_for(needy)
                if amount > 0:
                    return (
                        _request(
                            view.me,
                            ActionKind.ALLOCATE,
                            allocation_plan={needy["agent_id"]: amount},
                        ),
                        f"Helping {needy['agent_id']}",
                    )
        if view.bundle.round_index == 0 and view.others:
            return (
                _request(
                    view.me,
                    ActionKind.COMMUNICATE,
                    recipients=[o["agent_id"] for o in view.others],
                    message="Let us hunt together, and ask me if you are hungry",
                    intent="invite",
                ),
                "Inviting everyone to cooperate",
            )
        return super().socialize(view)

    def would_invite(self, view: _View, receiver: Dict[str, Any]) -> bool:
        return True

    def would_give(self, view: _View, target: Dict[str, Any]) -> bool:
        return True

    def strategy(self) -> str:
        return "Maximize everyone's welfare and never harm anyone"


_POLICIES = {
    MoralType.UNIVERSAL: UniversalPolicy,
    MoralType.RECIPROCAL: ReciprocalPolicy,
    MoralType.KIN: KinPolicy,
    MoralType.SELFISH: SelfishPolicy,
}


def scripted_policy(moral_type: MoralType) -> ScriptedPolicy:
    return _POLICIES[MoralType(moral_type)]()


class ScriptedBackend:
    """Population-wide backend: routes each bundle to its agent's type rules."""

    kind = "scripted"

    def __init__(self) -> None:
        self._policies = {t: scripted_policy(t) for t in MoralType.ordered()}

    def decide(self, bundle: ObservationBundle) -> PolicyResponse:
        return self._policies[MoralType(bundle.moral_type)].decide(bundle)
