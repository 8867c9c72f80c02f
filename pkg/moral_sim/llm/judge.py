"""
LLM judge: asks a chat model to guess an agent's moral type from its behavior digest.
"""

import logging
from typing import Any, Dict, List, Optional

from moral_sim.archive import RunArchive
from moral_sim.cognition.schema import extract_json_object
from moral_sim.errors import ResponseFormatError, TransportError
from moral_sim.llm.client import ChatExchange, Message
from moral_sim.llm.gateway import CompletionClient
from moral_sim.llm.prompts import PromptAssets
from moral_sim.models import MoralType

logger = logging.getLogger(__name__)

_TOLERANCE = 0.05


def parse_judgement(text: str) -> Dict[str, float]:
    """Parse a judge answer into a probability vector over the four moral types.

    Values close to a distribution (within 0.05 of summing to one) are renormalized.

    Raises:
        ResponseFormatError: If keys are missing, values are not numbers in [0, 1],
            or they are far from summing to one.
    """
    data = extract_json_object(text)
    probs: Dict[str, float] = {}
    for moral_type in MoralType.ordered():
        value = data.get(moral_type.value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ResponseFormatError(f"Judgement is missing a number for '{moral_type.value}'")
        if not 0.0 <= value <= 1.0:
            raise ResponseFormatError(f"Probability for '{moral_type.value}' is outside [0, 1]")
        probs[moral_type.value] = float(value)
    total = sum(probs.values())
    if abs(total - 1.0) > _TOLERANCE:
        raise ResponseFormatError(f"Probabilities sum to {total:.3f}, expected 1")
    return {key: value / total for key, value in probs.items()}


class LLMJudge:
    """Judge backend over the chat client, with one transcript file per judged agent."""

    kind = "llm"

    def __init__(
        self,
        client: CompletionClient,
        assets: Optional[PromptAssets] = None,
        archive: Optional[RunArchive] = None,
        max_retries: int = 3,
    ):
        self.client = client
        self.assets = assets or PromptAssets.load()
        self.archive = archive
        self.max_retries = max_retries

    def judge(self, agent_id: str, digest: str) -> Dict[str, float]:
        """Return judged type probabilities for one agent.

        Raises:
            ResponseFormatError: When no attempt yields a usable judgement.
        """
        messages: List[Message] = [
            {"role": "system", "content": self.assets.judge.strip()},
            {"role": "user", "content": digest},
        ]
        exchange = ChatExchange(
            self.client.model, self.client.temperature, self.client.timeout, list(messages)
        )
        last_error = "no attempt made"

        def note_failure(attempt: int, error: Exception) -> None:
            nonlocal last_error
            last_error = str(error)
            exchange.retry_count = attempt
            exchange.validation_trace.append({"layer": "judge", "error": last_error})
            logger.debug("Judge attempt %d for %s failed: %s", attempt, agent_id, error)

        try:
            for attempt in range(1, self.max_retries + 1):
                try:
                    text = self.client.chat_completion(messages)
                except TransportError as e:
                    exchange.attempts.append({"transport_error": str(e)})
                    note_failure(attempt, e)
                    continue
                exchange.attempts.append({"response": text})
                exchange.responses.append(text)
                try:
                    return parse_judgement(text)
                except ResponseFormatError as e:
                    note_failure(attempt, e)
        finally:
            self._persist(agent_id, exchange)
        raise ResponseFormatError(
            f"Judge gave no usable answer for {agent_id} after {self.max_retries} attempts "
            f"(last: {last_error})"
        )

    def _persist(self, agent_id: str, exchange: ChatExchange) -> None:
        if self.archive is None:
            return
        record: Dict[str, Any] = {"agent_id": agent_id, "role": "judge", **exchange.to_dict()}
        self.archive.append_transcript(f"judge_{agent_id}", record)
