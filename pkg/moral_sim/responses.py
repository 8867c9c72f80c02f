"""
JSON response helpers.

Used for CLI JSON output and for the error envelopes fed back to the model
when a policy response fails validation.
"""

import json
from dataclasses import asdict, is_dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np


class SimJSONEncoder(json.JSONEncoder):
    """JSON encoder that handles datetimes, enums, dataclasses and numpy scalars."""

    def default(self, obj):
        if isinstance(obj, datetime):
            return obj.isoformat()
        if isinstance(obj, Enum):
            return obj.value
        if is_dataclass(obj) and not isinstance(obj, type):
            return asdict(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


def dumps_canonical(data: Any) -> str:
    """Serialize with sorted keys and no whitespace, for hashing and byte-stable files."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), cls=SimJSONEncoder)


def make_response(data: Dict[str, Any], hint: str, compact: bool = False) -> str:
    """Create a JSON response with a hint for the reader."""
    if not compact:
        data["_hint"] = hint
    return json.dumps(data, indent=2, cls=SimJSONEncoder)


def make_error(
    error_type: str,
    message: str,
    suggestion: str,
    did_you_mean: Optional[List[str]] = None,
    compact: bool = False,
) -> str:
    """Create an educational error response."""
    error_body: Dict[str, Any] = {"type": error_type, "message": message}
    if not compact:
        error_body["suggestion"] = suggestion
        if did_you_mean:
            error_body["did_you_mean"] = did_you_mean
    error: Dict[str, Any] = {"_error": error_body}
    return json.dumps(error, indent=2, cls=SimJSONEncoder)
