"""JSON output with every float written to 17 significant digits."""

from __future__ import annotations

import json
import math

import numpy as np


def _float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite number {x!r} as JSON")
    s = format(x, ".17g")
    # keep floats recognisable as floats after a round-trip
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, out: list[str], sort_keys: bool) -> None:
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out, sort_keys)
    elif isinstance(obj, dict):
        items = sorted(obj.items()) if sort_keys else obj.items()
        out.append("{")
        for k, (key, val) in enumerate(items):
            if k:
                out.append(", ")
            out.append(json.dumps(str(key), ensure_ascii=False))
            out.append(": ")
            _encode(val, out, sort_keys)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, val in enumerate(obj):
            if k:
                out.append(", ")
            _encode(val, out, sort_keys)
        out.append("]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__} as JSON")


def dumps(obj, sort_keys: bool = False) -> str:
    out: list[str] = []
    _encode(obj, out, sort_keys)
    return "".join(out)
