"""
Exception types for moral-sim.

Everything derives from SimulationError, itself a RuntimeError, so callers that
only catch RuntimeError keep working.
"""

from typing import Any, Dict, List, Optional


class SimulationError(RuntimeError):
    """Base class for all moral-sim failures."""


class ConfigError(SimulationError):
    """A configuration document failed to parse or validate."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class CheckpointError(SimulationError):
    """A checkpoint is missing, corrupt, or belongs to a different config."""


class ArchiveError(SimulationError):
    """A run directory or its event log cannot be read."""


class ScenarioError(SimulationError):
    """A mini-game scenario document is invalid."""


class TransportError(SimulationError):
    """Retryable failure talking to the chat-completion endpoint."""

    def __init__(self, message: str, status_code: Optional[int] = None):
        super().__init__(message)
        self.status_code = status_code


class ResponseFormatError(SimulationError):
    """Model output is not a well-formed policy response."""


class DecisionFailure(SimulationError):
    """A policy backend could not produce an acceptable decision.

    The engine substitutes do_nothing for the agent and keeps running.
    """

    def __init__(
        self,
        message: str,
        agent_id: Optional[str] = None,
        trace: Optional[List[Dict[str, Any]]] = None,
    ):
        super().__init__(message)
        self.agent_id = agent_id
        self.trace = trace or []
