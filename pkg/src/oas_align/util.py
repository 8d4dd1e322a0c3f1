"""Small shared helpers: deterministic JSON output and job-parallel maps."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def write_json(obj: dict | list, path: str | Path) -> None:
    """Write JSON with a fixed layout so identical data yields identical bytes."""
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    lines = [json.dumps(rec) for rec in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Map preserving input order; results do not depend on ``jobs``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    max_workers = min(jobs, len(items), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * max_workers))))
