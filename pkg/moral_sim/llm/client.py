"""
Chat-completion transport.

Speaks the open chat-completions wire format (POST {base}/v1/chat/completions with
a role/content message array), so hosted providers and local inference servers
both work. Failures surface as TransportError, which the decision loop counts
against its retry budget.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from moral_sim import settings
from moral_sim.config import LLMParams
from moral_sim.errors import TransportError

logger = logging.getLogger(__name__)

Message = Dict[str, str]


@dataclass
class ChatExchange:
    """One decision's conversation with the model, as persisted in transcripts."""

    model: str
    temperature: float
    timeout: float
    messages: List[Message] = field(default_factory=list)
    responses: List[str] = field(default_factory=list)
    # Every call in order: {"response": text} or {"transport_error": message}
    attempts: List[Dict[str, str]] = field(default_factory=list)
    retry_count: int = 0
    validation_trace: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "request": {
                "model": self.model,
                "temperature": self.temperature,
                "timeout": self.timeout,
                "messages": list(self.messages),
            },
            "responses": list(self.responses),
            "attempts": list(self.attempts),
            "retry_count": self.retry_count,
            "validation_trace": list(self.validation_trace),
        }


def completions_url(base_url: str) -> str:
    base = base_url.rstrip("/")
    if base.endswith("/v1"):
        return f"{base}/chat/completions"
    return f"{base}/v1/chat/completions"


class ChatClient:
    """Client for an OpenAI-compatible chat-completions endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        temperature: float = 1.0,
        http_retries: Optional[int] = None,
    ):
        self.url = completions_url(base_url)
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.temperature = temperature

        # Connection-pooling session; 5xx responses are retried inside the adapter
        self._session = requests.Session()
        retry_strategy = Retry(
            total=settings.http_retries() if http_retries is None else http_retries,
            backoff_factor=0.5,
            status_forcelist=[500, 502, 503, 504],
            allowed_methods=frozenset({"POST"}),
            raise_on_status=False,
        )
        adapter = HTTPAdapter(max_retries=retry_strategy, pool_connections=4, pool_maxsize=4)
        self._session.mount("https://", adapter)
        self._session.mount("http://", adapter)

    @classmethod
    def from_params(cls, params: LLMParams, api_key: Optional[str] = None) -> "ChatClient":
        return cls(
            base_url=params.provider_url,
            model=params.model_id,
            api_key=api_key if api_key is not None else settings.api_key(params.api_key_env),
            timeout=params.timeout,
            temperature=params.temperature,
        )

    def chat_completion(self, messages: Sequence[Message]) -> str:
        """POST one chat-completion request and return the first choice's content.

        Raises:
            TransportError: On timeout, connection failure, non-2xx status or an
                unparseable body.
        """
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": self.temperature,
        }

        try:
            response = self._session.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.Timeout:
            raise TransportError(f"Chat request timed out after {self.timeout}s") from None
        except requests.RequestException as e:
            raise TransportError(f"Network error calling {self.url}: {e}") from None

        if not 200 <= response.status_code < 300:
            raise TransportError(
                f"Chat endpoint returned HTTP {response.status_code}: {response.text[:200]}",
                status_code=response.status_code,
            )
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"Unparseable chat response body: {e}") from None
        if not isinstance(content, str):
            raise TransportError("Chat response has no text content")
        return content


class TranscriptReplayClient:
    """Feeds recorded model outputs back in order, for offline replay of a run.

    Accepts the transcript records an LLMPolicy persisted. Each record's attempts
    are replayed in sequence through the same validation loop; a recorded
    transport failure is raised again, so failed decisions consume exactly the
    calls they made originally.
    """

    def __init__(self, records: Sequence[Dict[str, Any]]):
        self._attempts: List[Dict[str, str]] = []
        for record in records:
            if "attempts" in record:
                self._attempts.extend(record["attempts"])
            else:
                self._attempts.extend({"response": text} for text in record.get("responses", []))
        self._cursor = 0
        self._lock = threading.Lock()
        self.model = records[0]["request"]["model"] if records else "replay"
        self.temperature = 0.0
        self.timeout = 0.0

    def chat_completion(self, messages: Sequence[Message]) -> str:
        with self._lock:
            if self._cursor >= len(self._attempts):
                raise TransportError("Transcript exhausted: no recorded response left")
            attempt = self._attempts[self._cursor]
            self._cursor += 1
        if "transport_error" in attempt:
            raise TransportError(f"Recorded transport failure: {attempt['transport_error']}")
        return attempt["response"]
