"""Canonical serialization: sorted keys, floats at 6 significant digits."""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

SIG_DIGITS = 6


def fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return format(x, f".{SIG_DIGITS}g")


def canonical(obj: Any) -> Any:
    """Convert dataclasses/enums/sets/tuples to plain JSON values with rounded floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return int(obj)
    if isinstance(obj, float) or hasattr(obj, "dtype"):
        if hasattr(obj, "item"):
            obj = obj.item()
            if isinstance(obj, (bool, int)):
                return obj
        if math.isnan(obj) or math.isinf(obj):
            return None
        return float(fmt_float(obj))
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (set, frozenset)):
        return [canonical(v) for v in sorted(obj)]
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if hasattr(obj, "tolist"):
        return canonical(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj: Any, indent=None) -> str:
    return json.dumps(canonical(obj), sort_keys=True, ensure_ascii=False, indent=indent,
                      separators=(",", ":") if indent is None else (",", ": "))


def write_json(obj: Any, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(obj, indent=1) + "\n", encoding="utf-8")
    return path


def write_jsonl(rows: Iterable[Any], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(dumps_canonical(row) + "\n")
    return path


def _cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    if v is None:
        return ""
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, (list, tuple)):
        return " | ".join(_cell(x) for x in v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def sha256_path(path) -> str:
    """Content hash of a file, or of every file under a directory in sorted order."""
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        if path.is_dir():
            h.update(str(p.relative_to(path)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps_canonical(config).encode()).hexdigest()
