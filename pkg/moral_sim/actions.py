"""
Action resolution.

The quantitative model for the eight agent actions. Every resolver records exactly
one EventRecord for the decision (plus death records for anyone it kills) and
returns an ActionOutcome. Invalid requests are nullified: logged with a
failure_reason and no state change.

Costs are paid before any Bernoulli draw. An actor killed by its own action cost
consumes no draw, which keeps the RNG stream well-defined.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

from moral_sim.cognition.schema import ActionRequest
from moral_sim.models import (
    ActionKind,
    ActionOutcome,
    AgentState,
    DeathCause,
    RoundPhase,
)
from moral_sim.world import WorldState

logger = logging.getLogger(__name__)

Draw = Callable[[], float]

FIGHT_COST = 1
ROB_COST = 1
HUNT_COST = 1

P_MIN = 0.1
P_MAX = 0.9


def success_probability(delta_pa: float, intercept: float, slope: float) -> float:
    """Clipped tanh success function over a physical-ability difference.

    Raises:
        ValueError: If slope is zero.
    """
    if slope == 0:
        raise ValueError("slope must be non-zero")
    p = (0.5 + intercept) + 0.4 * math.tanh(delta_pa / slope)
    return min(max(p, P_MIN), P_MAX)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _draw_source(state: WorldState, draw: Optional[Draw]) -> Draw:
    return draw if draw is not None else state.rng.random


def _living_actor(state: WorldState, actor_id: str) -> AgentState:
    actor = state.agents.get(actor_id)
    if actor is None or not actor.alive:
        raise ValueError(f"Actor '{actor_id}' is not a living agent")
    return actor


def _nullify(
    state: WorldState,
    actor_id: str,
    kind: ActionKind,
    reason: str,
    *,
    targets: Optional[List[str]] = None,
    parameters: Optional[Dict] = None,
    message: Optional[str] = None,
) -> ActionOutcome:
    event = state.record(
        actor_id,
        kind.value,
        targets=targets or [],
        parameters=parameters,
        success=False,
        message=message,
        failure_reason=reason,
    )
    logger.debug("Nullified %s by %s: %s", kind.value, actor_id, reason)
    return ActionOutcome(event=event)


def _pay_cost(actor: AgentState, cost: int, deltas: Dict[str, int]) -> bool:
    """Deduct an action cost. Returns True when the actor survives it."""
    paid = min(cost, actor.hp)
    actor.hp -= paid
    deltas[actor.agent_id] = deltas.get(actor.agent_id, 0) - paid
    return actor.hp > 0


def _gain(agent: AgentState, amount: int) -> int:
    """Add HP clamped to max_hp; returns the amount actually gained."""
    gained = max(0, min(amount, agent.max_hp - agent.hp))
    agent.hp += gained
    return gained


def _bernoulli(p: float, draw: Draw) -> Tuple[bool, Dict[str, float]]:
    u = float(draw())
    return u < p, {"p": p, "u": u}


def _target_problem(state: WorldState, actor_id: str, target_id: Optional[str]) -> Optional[str]:
    if not target_id:
        return "no target given"
    if target_id == actor_id:
        return "cannot target yourself"
    if target_id not in state.agents:
        return f"no agent named {target_id}"
    if not state.agents[target_id].alive:
        return f"{target_id} is not alive"
    return None


# ---------------------------------------------------------------------------
# Production actions
# ---------------------------------------------------------------------------


def resolve_collect(state: WorldState, actor_id: str, plant_id: str, q_req: int) -> ActionOutcome:
    actor = _living_actor(state, actor_id)
    kind = ActionKind.COLLECT
    plant = state.plants.get(plant_id)
    params = {"requested": q_req}
    if plant is None:
        return _nullify(state, actor_id, kind, f"no plant named {plant_id}", parameters=params)
    if plant.depleted or plant.quantity == 0:
        return _nullify(
            state, actor_id, kind, f"{plant_id} is depleted", targets=[plant_id], parameters=params
        )
    if q_req <= 0 or plant.quantity < q_req:
        return _nullify(
            state,
            actor_id,
            kind,
            f"{plant_id} has {plant.quantity} units, requested {q_req}",
            targets=[plant_id],
            parameters=params,
        )

    collected = min(q_req, plant.quantity, state.config.collect_cap)
    gained = _gain(actor, collected * plant.nutrition_per_unit)
    plant.quantity -= collected
    if plant.quantity == 0:
        plant.steps_until_respawn = plant.respawn_delay

    event = state.record(
        actor_id,
        kind.value,
        targets=[plant_id],
        parameters={**params, "collected": collected, "hp_gain": gained},
        hp_deltas={actor_id: gained},
    )
    return ActionOutcome(event=event)


def resolve_hunt(
    state: WorldState, actor_id: str, prey_id: str, draw: Optional[Draw] = None
) -> ActionOutcome:
    """Attack a prey animal. The killing blow earns the prey's full max HP."""
    actor = _living_actor(state, actor_id)
    kind = ActionKind.HUNT
    prey = state.prey.get(prey_id)
    if prey is None or prey.hp <= 0:
        return _nullify(state, actor_id, kind, f"no living prey named {prey_id}")

    config = state.config
    deltas: Dict[str, int] = {}
    params: Dict = {"actor_hp_before": actor.hp, "prey_hp_before": prey.hp, "cost": HUNT_COST}
    if not _pay_cost(actor, HUNT_COST, deltas):
        event = state.record(
            actor_id,
            kind.value,
            targets=[prey_id],
            parameters={**params, "attempted": False},
            success=False,
            hp_deltas=deltas,
        )
        state.kill_agent(actor_id, DeathCause.ACTION_COST, by=prey_id)
        return ActionOutcome(event=event, actor_died=True)

    p = success_probability(
        actor.physical_ability - prey.physical_ability, config.pa_intercept, config.pa_slope
    )
    success, record = _bernoulli(p, _draw_source(state, draw))
    killed = False
    reward = 0
    if success:
        damage = min(math.floor(actor.physical_ability), prey.hp)
        prey.hp -= damage
        deltas[prey_id] = -damage
        params["damage"] = damage
        if prey.hp == 0:
            killed = True
            del state.prey[prey_id]
            reward = _gain(actor, prey.max_hp)
            deltas[actor_id] += reward
            params["reward"] = reward
    else:
        counter = min(prey.counter_damage, actor.hp)
        actor.hp -= counter
        deltas[actor_id] -= counter
        params["counter_damage"] = counter
    params["killed"] = killed

    event = state.record(
        actor_id,
        kind.value,
        targets=[prey_id],
        parameters=params,
        success=success,
        hp_deltas=deltas,
        draws=[record],
    )
    died = actor.hp == 0
    if died:
        state.kill_agent(actor_id, DeathCause.HUNT, by=prey_id)
    return ActionOutcome(event=event, actor_died=died, prey_killed=killed, reward_granted=reward)


def resolve_reproduce(state: WorldState, actor_id: str) -> ActionOutcome:
    """Create a child that inherits the parent's moral type.

    The parent pays hp_cost_repro clamped at its HP; a parent left at 0 dies after
    delivery and the child persists.
    """
    actor = _living_actor(state, actor_id)
    kind = ActionKind.REPRODUCE
    config = state.config
    if actor.age < config.min_age_repro:
        return _nullify(
            state, actor_id, kind, f"age {actor.age} is below minimum age {config.min_age_repro}"
        )
    if actor.hp < config.min_hp_repro:
        return _nullify(
            state, actor_id, kind, f"HP {actor.hp} is below minimum HP {config.min_hp_repro}"
        )

    ability = state.sample_physical_ability()
    child = state.add_agent(
        actor.moral_type,
        hp=config.offspring_hp,
        age=0,
        physical_ability=ability,
        parent_id=actor_id,
    )
    cost = min(config.hp_cost_repro, actor.hp)
    actor.hp -= cost
    event = state.record(
        actor_id,
        kind.value,
        parameters={
            "child_id": child.agent_id,
            "child_physical_ability": ability,
            "cost": cost,
            "actor_age": actor.age,
        },
        hp_deltas={actor_id: -cost, child.agent_id: config.offspring_hp},
    )
    died = actor.hp == 0
    if died:
        state.kill_agent(actor_id, DeathCause.CHILDBIRTH)
    logger.debug("%s gave birth to %s", actor_id, child.agent_id)
    return ActionOutcome(event=event, actor_died=died)


# ---------------------------------------------------------------------------
# Social actions
# ---------------------------------------------------------------------------


def resolve_allocate(
    state: WorldState, actor_id: str, allocation_plan: Dict[str, int]
) -> ActionOutcome:
    """Transfer HP to one or more living agents.

    The donor must hold strictly more HP than the total and always pays the full
    total, even when a recipient's gain is clamped at its max.
    """
    actor = _living_actor(state, actor_id)
    kind = ActionKind.ALLOCATE
    plan = dict(allocation_plan)
    params = {"plan": plan}
    targets = list(plan)
    if not plan:
        return _nullify(state, actor_id, kind, "allocation plan is empty", parameters=params)
    for target_id, amount in plan.items():
        problem = _target_problem(state, actor_id, target_id)
        if problem:
            return _nullify(state, actor_id, kind, problem, targets=targets, parameters=params)
        if amount <= 0:
            return _nullify(
                state,
                actor_id,
                kind,
                f"amount for {target_id} must be positive",
                targets=targets,
                parameters=params,
            )
    total = sum(plan.values())
    if actor.hp <= total:
        return _nullify(
            state,
            actor_id,
            kind,
            f"needs more than {total} HP to allocate {total}, has {actor.hp}",
            targets=targets,
            parameters=params,
        )

    actor.hp -= total
    deltas = {actor_id: -total}
    received = {}
    for target_id, amount in plan.items():
        received[target_id] = _gain(state.agents[target_id], amount)
        deltas[target_id] = received[target_id]
    event = state.record(
        actor_id,
        kind.value,
        targets=targets,
        parameters={**params, "total": total, "received": received},
        hp_deltas=deltas,
    )
    return ActionOutcome(event=event)


def resolve_fight(
    state: WorldState, actor_id: str, target_id: str, draw: Optional[Draw] = None
) -> ActionOutcome:
    actor = _living_actor(state, actor_id)
    kind = ActionKind.FIGHT
    problem = _target_problem(state, actor_id, target_id)
    if problem:
        return _nullify(state, actor_id, kind, problem, targets=[target_id] if target_id else [])

    target = state.agents[target_id]
    config = state.config
    deltas: Dict[str, int] = {}
    params: Dict = {"actor_hp_before": actor.hp, "target_hp_before": target.hp, "cost": FIGHT_COST}
    if not _pay_cost(actor, FIGHT_COST, deltas):
        event = state.record(
            actor_id,
            kind.value,
            targets=[target_id],
            parameters={**params, "attempted": False},
            success=False,
            hp_deltas=deltas,
        )
        state.kill_agent(actor_id, DeathCause.ACTION_COST, by=target_id)
        return ActionOutcome(event=event, actor_died=True)

    p = success_probability(
        actor.physical_ability - target.physical_ability, config.pa_intercept, config.pa_slope
    )
    success, record = _bernoulli(p, _draw_source(state, draw))
    if success:
        damage = min(math.floor(actor.physical_ability), target.hp)
        target.hp -= damage
        deltas[target_id] = -damage
        params["damage"] = damage

    event = state.record(
        actor_id,
        kind.value,
        targets=[target_id],
        parameters=params,
        success=success,
        hp_deltas=deltas,
        draws=[record],
    )
    died = success and target.hp == 0
    if died:
        state.kill_agent(target_id, DeathCause.FIGHT, by=actor_id)
    return ActionOutcome(event=event, target_died=died)


def resolve_rob(
    state: WorldState,
    actor_id: str,
    target_id: str,
    h_req: int,
    draw: Optional[Draw] = None,
) -> ActionOutcome:
    """Try to take exactly h_req HP from a target that holds at least that much."""
    actor = _living_actor(state, actor_id)
    kind = ActionKind.ROB
    params: Dict = {"requested": h_req}
    problem = _target_problem(state, actor_id, target_id)
    if problem:
        return _nullify(
            state,
            actor_id,
            kind,
            problem,
            targets=[target_id] if target_id else [],
            parameters=params,
        )
    target = state.agents[target_id]
    if h_req <= 0:
        return _nullify(
            state,
            actor_id,
            kind,
            "rob amount must be positive",
            targets=[target_id],
            parameters=params,
        )
    if target.hp < h_req:
        return _nullify(
            state,
            actor_id,
            kind,
            f"{target_id} has only {target.hp} HP, requested {h_req}",
            targets=[target_id],
            parameters=params,
        )

    config = state.config
    deltas: Dict[str, int] = {}
    params.update(actor_hp_before=actor.hp, target_hp_before=target.hp, cost=ROB_COST)
    if not _pay_cost(actor, ROB_COST, deltas):
        event = state.record(
            actor_id,
            kind.value,
            targets=[target_id],
            parameters={**params, "attempted": False},
            success=False,
            hp_deltas=deltas,
        )
        state.kill_agent(actor_id, DeathCause.ACTION_COST, by=target_id)
        return ActionOutcome(event=event, actor_died=True)

    p = success_probability(
        actor.physical_ability - target.physical_ability, config.pa_intercept, config.pa_slope
    )
    success, record = _bernoulli(p, _draw_source(state, draw))
    if success:
        taken = min(h_req, target.hp)
        target.hp -= taken
        gained = _gain(actor, taken)
        deltas[target_id] = -taken
        deltas[actor_id] += gained
        params.update(taken=taken, gained=gained)

    event = state.record(
        actor_id,
        kind.value,
        targets=[target_id],
        parameters=params,
        success=success,
        hp_deltas=deltas,
        draws=[record],
    )
    died = success and target.hp == 0
    if died:
        state.kill_agent(target_id, DeathCause.ROB, by=actor_id)
    return ActionOutcome(event=event, target_died=died)


def resolve_communicate(
    state: WorldState,
    actor_id: str,
    recipients: List[str],
    message: str,
    intent: Optional[str] = None,
) -> ActionOutcome:
    """Deliver a message to living recipients through the event log."""
    _living_actor(state, actor_id)
    kind = ActionKind.COMMUNICATE
    ordered = list(dict.fromkeys(recipients or []))
    params: Dict = {"intent": intent} if intent else {}
    limit = state.config.message_max_length
    if not ordered:
        return _nullify(state, actor_id, kind, "no recipients", parameters=params, message=message)
    for recipient in ordered:
        problem = _target_problem(state, actor_id, recipient)
        if problem:
            return _nullify(
                state, actor_id, kind, problem, targets=ordered, parameters=params, message=message
            )
    if len(message) > limit:
        return _nullify(
            state,
            actor_id,
            kind,
            f"message has {len(message)} characters, maximum is {limit}",
            targets=ordered,
            parameters=params,
            message=message,
        )

    event = state.record(
        actor_id,
        kind.value,
        targets=ordered,
        parameters={**params, "deliveries": ordered},
        message=message,
    )
    return ActionOutcome(event=event, deliveries=ordered)


def resolve_do_nothing(
    state: WorldState, actor_id: str, parameters: Optional[Dict] = None
) -> ActionOutcome:
    _living_actor(state, actor_id)
    event = state.record(actor_id, ActionKind.DO_NOTHING.value, parameters=parameters)
    return ActionOutcome(event=event)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def resolve_action(
    state: WorldState,
    request: ActionRequest,
    phase: RoundPhase,
    draw: Optional[Draw] = None,
) -> ActionOutcome:
    """Resolve a validated request in the given round.

    A kind that is illegal for the phase is nullified before any cost is paid.
    """
    actor_id = request.actor_id
    if actor_id is None:
        raise ValueError("ActionRequest has no actor_id")
    _living_actor(state, actor_id)
    kind = request.kind
    if kind not in phase.legal_actions:
        return _nullify(
            state,
            actor_id,
            kind,
            f"{kind.value} is not legal in a {phase.kind.value} round",
            targets=[request.target] if request.target else [],
        )

    if kind == ActionKind.COLLECT:
        return resolve_collect(state, actor_id, request.target or "", request.quantity or 0)
    if kind == ActionKind.HUNT:
        return resolve_hunt(state, actor_id, request.target or "", draw)
    if kind == ActionKind.REPRODUCE:
        return resolve_reproduce(state, actor_id)
    if kind == ActionKind.ALLOCATE:
        return resolve_allocate(state, actor_id, request.allocation_plan or {})
    if kind == ActionKind.FIGHT:
        return resolve_fight(state, actor_id, request.target or "", draw)
    if kind == ActionKind.ROB:
        return resolve_rob(state, actor_id, request.target or "", request.quantity or 0, draw)
    if kind == ActionKind.COMMUNICATE:
        return resolve_communicate(
            state, actor_id, request.recipients or [], request.message or "", request.intent
        )
    return resolve_do_nothing(state, actor_id)
