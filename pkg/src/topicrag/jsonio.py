"""Canonical JSON helpers.

Every artifact the engine writes (manifests, model files, traces, reports)
goes through ``canonical_dumps`` so that identical inputs produce
byte-identical files.
"""

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


def canonical_dumps(obj: Any) -> str:
    """Serialize with sorted keys and compact separators."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def canonical_pretty(obj: Any) -> str:
    """Sorted-key, indented form for human-inspected files."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> int:
    """Write one canonical JSON object per line; returns the row count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(canonical_dumps(row) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield (1-based line number, parsed object); blank lines are skipped.

    Parse failures propagate as ``json.JSONDecodeError`` with the line
    number available to the caller via the exception's position.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield lineno, json.loads(line)
