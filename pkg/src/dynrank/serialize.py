"""Canonical JSON/CSV emission.

Output bytes are part of the determinism contract: floats are formatted with
17 significant digits (lossless for IEEE doubles), keys keep insertion order,
and files end with a single newline. Non-finite floats are refused; encode
absent values as None upstream.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

__all__ = [
    "canonical_json",
    "config_digest",
    "format_float",
    "write_csv",
    "write_json",
]


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(float(x), ".17g")


def _emit(obj, out: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        import json

        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, Mapping):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                raise ValueError(f"JSON object keys must be strings, got {k!r}")
            import json

            out.append(inner + json.dumps(k, ensure_ascii=False) + ": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, Sequence):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(inner)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(pad + "]")
    else:
        # numpy scalars and similar duck-typed numbers
        if hasattr(obj, "item"):
            _emit(obj.item(), out, indent, level)
            return
        raise ValueError(f"cannot serialize {type(obj).__name__}: {obj!r}")


def canonical_json(obj, indent: int = 2) -> str:
    out: list[str] = []
    _emit(obj, out, indent, 0)
    return "".join(out)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows, meta: str | None = None) -> None:
    """Write a deterministic CSV; an optional `# ...` meta comment line goes
    above the header (readable by pandas with comment='#')."""
    buf = io.StringIO()
    if meta is not None:
        buf.write(f"# {meta}\r\n")
    w = csv.writer(buf)
    w.writerow(list(header))
    for row in rows:
        w.writerow([_cell(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def config_digest(path: str | Path | None) -> str:
    """sha256 of the raw config bytes, or 'none' when running flag-only."""
    if path is None:
        return "none"
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
