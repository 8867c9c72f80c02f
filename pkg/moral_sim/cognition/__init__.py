"""
Agent cognition: observations, the memory/response schema, and policy backends.
"""

import logging

from moral_sim.cognition.observation import ObservationBundle, assemble_observation
from moral_sim.cognition.schema import MemoryDocument, PolicyResponse
from moral_sim.cognition.scripted import ScriptedBackend, scripted_policy
from moral_sim.errors import DecisionFailure
from moral_sim.models import PolicyBackend

logger = logging.getLogger(__name__)


def policy_decide(backend: PolicyBackend, bundle: ObservationBundle) -> PolicyResponse:
    """Ask a backend for a decision and enforce the response contract.

    Raises:
        DecisionFailure: If the backend gives up, answers for another agent, or
            picks an action that is illegal in the current round.
    """
    response = backend.decide(bundle)
    if not isinstance(response, PolicyResponse):
        raise DecisionFailure(
            f"{backend.kind} backend returned {type(response).__name__}, not a PolicyResponse",
            agent_id=bundle.agent_id,
        )
    if response.agent_id != bundle.agent_id:
        raise DecisionFailure(
            f"Response is for {response.agent_id}, expected {bundle.agent_id}",
            agent_id=bundle.agent_id,
        )
    if response.action.kind.value not in bundle.legal_actions:
        raise DecisionFailure(
            f"{response.action.kind.value} is not legal in a {bundle.round_kind} round",
            agent_id=bundle.agent_id,
        )
    return response


__all__ = [
    "MemoryDocument",
    "ObservationBundle",
    "PolicyResponse",
    "ScriptedBackend",
    "assemble_observation",
    "policy_decide",
    "scripted_policy",
]
