import json
import math
from typing import Any

import numpy as np

from .base import BaseWriter


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples to JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(item) for item in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class JsonWriter(BaseWriter):
    """Writes a JSON document with 2-space indentation and sorted keys."""

    kind = "json"

    def write(self, path: str, data: Any):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(to_jsonable(data), f, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
