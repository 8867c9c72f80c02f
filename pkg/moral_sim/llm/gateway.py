"""
LLM-backed policy: the validate-and-retry decision loop.

Each decision is one growing conversation. A response that fails the schema
(Layer 1) or the contextual checks (Layer 2) is answered with an error envelope
and the model tries again. With reflection enabled, the first valid response is
followed by the reflection prompt and only the reflected answer is kept. Schema
failures, contextual failures and transport errors all draw on the single
max_retries budget.
"""

import logging
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence

from moral_sim.archive import RunArchive
from moral_sim.cognition.observation import ObservationBundle
from moral_sim.cognition.schema import PolicyResponse, parse_policy_response
from moral_sim.cognition.validation import contextual_errors
from moral_sim.config import SimulationConfig
from moral_sim.errors import DecisionFailure, ResponseFormatError, TransportError
from moral_sim.llm.client import ChatExchange, Message, TranscriptReplayClient
from moral_sim.llm.prompts import PromptAssets, build_messages, render_reflection
from moral_sim.responses import make_error

logger = logging.getLogger(__name__)


class CompletionClient(Protocol):
    model: str
    temperature: float
    timeout: float

    def chat_completion(self, messages: Sequence[Message]) -> str: ...


def _schema_feedback(problem: str) -> str:
    return make_error(
        error_type="invalid_response_format",
        message=problem,
        suggestion=(
            "Return exactly one JSON object with agent_id, thinking, long_term_memory "
            "(all five sections), short_term_plan and action, in the prescribed format."
        ),
    )


def _context_feedback(problems: List[str], legal: List[str]) -> str:
    return make_error(
        error_type="invalid_action",
        message="; ".join(problems),
        suggestion="Fix these problems against your current observation and answer again.",
        did_you_mean=legal,
    )


def decide_with_validation(
    client: CompletionClient,
    messages: Sequence[Message],
    bundle: ObservationBundle,
    config: SimulationConfig,
    assets: Optional[PromptAssets] = None,
    exchange: Optional[ChatExchange] = None,
) -> PolicyResponse:
    """Run the multi-layer validation loop for one decision.

    Args:
        client: Chat client (live, fake, or transcript replay).
        messages: Initial system and user messages.
        bundle: The observation the messages were built from (for Layer 2).
        config: Supplies max_retries and reflection_enabled.
        assets: Prompt assets for the reflection prompt.
        exchange: Filled in with the full conversation and validation trace.

    Raises:
        DecisionFailure: When failures reach config.llm.max_retries.
    """
    params = config.llm
    if exchange is None:
        exchange = ChatExchange(client.model, client.temperature, client.timeout)
    conversation: List[Message] = list(messages)
    exchange.messages = conversation
    reflected = not params.reflection_enabled
    failures = 0

    def fail(layer: str, problem: str) -> None:
        nonlocal failures
        failures += 1
        exchange.retry_count = failures
        exchange.validation_trace.append({"layer": layer, "error": problem})
        logger.debug("%s failure %d for %s: %s", layer, failures, bundle.agent_id, problem)
        if failures >= params.max_retries:
            raise DecisionFailure(
                f"{bundle.agent_id}: no acceptable response after {failures} failures "
                f"(last: {problem})",
                agent_id=bundle.agent_id,
                trace=exchange.validation_trace,
            )

    while True:
        try:
            text = client.chat_completion(conversation)
        except TransportError as e:
            exchange.attempts.append({"transport_error": str(e)})
            fail("transport", str(e))
            continue
        exchange.attempts.append({"response": text})
        exchange.responses.append(text)
        conversation.append({"role": "assistant", "content": text})

        try:
            response = parse_policy_response(text)
        except ResponseFormatError as e:
            fail("schema", str(e))
            conversation.append({"role": "user", "content": _schema_feedback(str(e))})
            continue

        problems = contextual_errors(response, bundle)
        if problems:
            fail("context", "; ".join(problems))
            conversation.append(
                {"role": "user", "content": _context_feedback(problems, bundle.legal_actions)}
            )
            continue

        if not reflected:
            reflected = True
            assets = assets or PromptAssets.load()
            conversation.append({"role": "user", "content": render_reflection(assets, config)})
            continue

        exchange.retry_count = failures
        return response


class LLMPolicy:
    """PolicyBackend that asks a chat model, persisting one transcript line per decision."""

    kind = "llm"

    def __init__(
        self,
        client: CompletionClient,
        config: SimulationConfig,
        assets: Optional[PromptAssets] = None,
        archive: Optional[RunArchive] = None,
        agent_clients: Optional[Mapping[str, CompletionClient]] = None,
    ):
        self.client = client
        self.config = config
        self.assets = assets or PromptAssets.load()
        self.archive = archive
        self.agent_clients = dict(agent_clients or {})

    def decide(self, bundle: ObservationBundle) -> PolicyResponse:
        client = self.agent_clients.get(bundle.agent_id, self.client)
        messages = build_messages(self.assets, bundle, self.config)
        exchange = ChatExchange(client.model, client.temperature, client.timeout)
        outcome = "accepted"
        try:
            return decide_with_validation(
                client, messages, bundle, self.config, self.assets, exchange
            )
        except DecisionFailure:
            outcome = "failed"
            raise
        finally:
            self._persist(bundle, exchange, outcome)

    def _persist(self, bundle: ObservationBundle, exchange: ChatExchange, outcome: str) -> None:
        if self.archive is None:
            return
        record: Dict[str, Any] = {
            "agent_id": bundle.agent_id,
            "step": bundle.step,
            "round_index": bundle.round_index,
            "outcome": outcome,
            **exchange.to_dict(),
        }
        self.archive.append_transcript(bundle.agent_id, record)


def replay_policy(archive: RunArchive, config: Optional[SimulationConfig] = None) -> LLMPolicy:
    """An LLMPolicy that replays a run's recorded model outputs instead of calling a model."""
    config = config or archive.config
    clients: Dict[str, CompletionClient] = {}
    if archive.transcripts_dir.exists():
        for path in sorted(archive.transcripts_dir.glob("agent_*.jsonl")):
            agent_id = path.stem
            clients[agent_id] = TranscriptReplayClient(archive.load_transcript(agent_id))
    return LLMPolicy(TranscriptReplayClient([]), config, agent_clients=clients)
