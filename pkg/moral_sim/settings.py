"""
Process-level settings from the environment.

Simulation parameters live in the config document; these only tune where runs
are written, logging, concurrency and transport retries.
"""

import logging
import os
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Invalid %s value %r, using default of %d", name, raw, default)
        return default
    if value < minimum:
        logger.warning("%s must be at least %d, using default of %d", name, minimum, default)
        return default
    return value


def runs_dir() -> Path:
    return Path(os.environ.get("MORALSIM_RUNS_DIR", "runs"))


def log_level() -> str:
    return os.environ.get("MORALSIM_LOG_LEVEL", "INFO").upper()


def parallel_workers() -> int:
    return _env_int("MORALSIM_PARALLEL_WORKERS", 4, minimum=1)


def http_retries() -> int:
    return _env_int("MORALSIM_HTTP_RETRIES", 2)


def api_key(env_name: str = "MORALSIM_API_KEY") -> Optional[str]:
    """Bearer token for the chat endpoint, falling back to OPENAI_API_KEY."""
    return os.environ.get(env_name) or os.environ.get("OPENAI_API_KEY") or None
