"""
Contextual (Layer-2) validation of a policy response against the observation it
answered. Layer 1 is the schema in cognition.schema; Layer 3 is the resolver,
which nullifies anything that still fails at execution time.
"""

import json
import logging
from typing import List

from moral_sim.cognition.observation import ObservationBundle
from moral_sim.cognition.schema import PolicyResponse
from moral_sim.models import ActionKind

logger = logging.getLogger(__name__)


def memory_size_bytes(response: PolicyResponse) -> int:
    document = response.memory_document()
    return len(json.dumps(document, ensure_ascii=False, sort_keys=True).encode("utf-8"))


def contextual_errors(response: PolicyResponse, bundle: ObservationBundle) -> List[str]:
    """Human-readable problems with a schema-valid response. Empty means valid."""
    errors: List[str] = []
    action = response.action
    kind = action.kind
    rules = bundle.rules
    hp = bundle.hp

    if response.agent_id != bundle.agent_id:
        errors.append(f"agent_id must be {bundle.agent_id}, got {response.agent_id}")

    if kind.value not in bundle.legal_actions:
        errors.append(
            f"{kind.value} is not legal in this {bundle.round_kind} round. "
            f"Choose one of: {', '.join(bundle.legal_actions)}"
        )

    if kind == ActionKind.COLLECT:
        plant = bundle.plant(action.target or "")
        if plant is None:
            errors.append(f"There is no plant named {action.target}")
        elif plant["steps_until_respawn"] > 0 or plant["quantity"] == 0:
            errors.append(f"{action.target} is depleted")
        elif plant["quantity"] < (action.quantity or 0):
            errors.append(
                f"{action.target} has only {plant['quantity']} units, "
                f"you requested {action.quantity}"
            )
    elif kind == ActionKind.HUNT:
        if bundle.prey(action.target or "") is None:
            errors.append(f"There is no living prey named {action.target}")
    elif kind == ActionKind.REPRODUCE:
        status = bundle.self_status["reproduction"]
        if not status["eligible"]:
            errors.append(f"You cannot reproduce yet: {', '.join(status['unmet'])} not met")
    elif kind == ActionKind.ALLOCATE:
        plan = action.allocation_plan or {}
        for target_id in plan:
            if target_id == bundle.agent_id:
                errors.append("You cannot allocate HP to yourself")
            elif bundle.other(target_id) is None:
                errors.append(f"{target_id} is not a living agent")
        total = action.total_allocation
        if hp <= total:
            errors.append(f"Allocating {total} HP needs more than {total} HP; you have {hp}")
    elif kind in (ActionKind.FIGHT, ActionKind.ROB):
        target = bundle.other(action.target or "")
        if action.target == bundle.agent_id:
            errors.append(f"You cannot {kind.value} yourself")
        elif target is None:
            errors.append(f"{action.target} is not a living agent")
        elif kind == ActionKind.ROB and target["hp"] < (action.quantity or 0):
            errors.append(
                f"{action.target} has only {target['hp']} HP, "
                f"you cannot rob {action.quantity}"
            )
    elif kind == ActionKind.COMMUNICATE:
        recipients = action.recipients or []
        if not recipients:
            errors.append("A message needs at least one recipient")
        for recipient in recipients:
            if recipient == bundle.agent_id:
                errors.append("You cannot send a message to yourself")
            elif bundle.other(recipient) is None:
                errors.append(f"{recipient} is not a living agent")
        message = action.message or ""
        if len(message) > rules["message_max_length"]:
            errors.append(
                f"Message has {len(message)} characters, "
                f"maximum is {rules['message_max_length']}"
            )
        if ":" in message:
            errors.append("Message content must not contain colons")

    size = memory_size_bytes(response)
    if size > rules["memory_cap_bytes"]:
        errors.append(
            f"long_term_memory is {size} bytes, the limit is {rules['memory_cap_bytes']}. "
            "Condense older entries."
        )

    if errors:
        logger.debug("Contextual validation for %s: %s", bundle.agent_id, errors)
    return errors
