# utils_serialization.py
import dataclasses
import enum
import json
import math

import numpy as np

from intervals import Interval
from lattice import SiteSet


def _is_site(value) -> bool:
    return isinstance(value, tuple) and bool(value) and all(
        isinstance(c, (int, np.integer)) and not isinstance(c, bool) for c in value
    )


def _float(value: float):
    if math.isfinite(value):
        return value
    if math.isnan(value):
        return "nan"
    return "inf" if value > 0 else "-inf"


def serialize_result(result):
    """Convert sampler results, records and reports into JSON-serializable form."""
    if result is None:
        return None

    if isinstance(result, enum.Enum):
        return serialize_result(result.value)

    if isinstance(result, (bool, np.bool_)):
        return bool(result)

    if isinstance(result, (int, np.integer)):
        return int(result)

    if isinstance(result, (float, np.floating)):
        return _float(float(result))

    if isinstance(result, str):
        return result

    if isinstance(result, Interval):
        return [_float(result.low), _float(result.high)]

    if isinstance(result, SiteSet):
        return [list(s) for s in result]

    # Sites are coordinate tuples
    if _is_site(result):
        return [int(c) for c in result]

    if isinstance(result, (list, tuple)):
        return [serialize_result(r) for r in result]

    if isinstance(result, np.ndarray):
        return [serialize_result(r) for r in result.tolist()]

    # Spin windows (site-keyed dicts) become sorted [site, value] pairs
    if isinstance(result, dict):
        if result and all(_is_site(k) for k in result):
            return [[list(k), serialize_result(v)] for k, v in sorted(result.items())]
        return {str(k): serialize_result(v) for k, v in result.items()}

    if dataclasses.is_dataclass(result):
        return {
            f.name: serialize_result(getattr(result, f.name))
            for f in dataclasses.fields(result)
            if f.metadata.get("serialize", True)
        }

    if hasattr(result, "__dict__"):
        return {k: serialize_result(v) for k, v in vars(result).items() if not k.startswith("_")}

    # Fallback: string representation
    return str(result)


def dumps(result) -> str:
    """Byte-stable single-line JSON."""
    return json.dumps(serialize_result(result), sort_keys=True, separators=(",", ":"))
