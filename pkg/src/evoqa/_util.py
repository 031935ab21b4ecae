"""Shared helpers: hashing, atomic file writes, bounded parallel execution."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

K = TypeVar("K")
T = TypeVar("T")
R = TypeVar("R")


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def stable_int(*parts: object, bits: int = 31) -> int:
    """Deterministic non-negative integer derived from the given parts.

    Unlike ``hash()`` this does not depend on PYTHONHASHSEED, so values are
    stable across processes and runs.
    """
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (1 << bits)


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write a file so readers never observe a partially written state."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: Path | str, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def run_parallel(
    tasks: Iterable[tuple[K, Callable[[], R]]],
    max_parallel: int,
) -> tuple[dict[K, R], dict[K, Exception]]:
    """Run keyed thunks concurrently; join results and errors by key.

    Completion order is irrelevant to the caller: both maps are keyed, so
    output assembly stays deterministic regardless of scheduling.
    """
    tasks = list(tasks)
    results: dict[K, R] = {}
    errors: dict[K, Exception] = {}
    if not tasks:
        return results, errors
    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        futures = {key: pool.submit(fn) for key, fn in tasks}
        for key, fut in futures.items():
            try:
                results[key] = fut.result()
            except Exception as exc:  # noqa: BLE001 - collected per task
                errors[key] = exc
    return results, errors
