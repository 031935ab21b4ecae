"""Loading and validation of the unlabeled document collection and the
held-out evaluation QA set.

Both inputs are JSON-Lines files, UTF-8, one record per line:

* documents:  ``{"id": str, "text": str, "metadata": {str: str}?}``
* eval pairs: ``{"id": str, "question": str, "reference_answer": str}``

Values are immutable after load and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusError


@dataclass(frozen=True)
class KnowledgeDocument:
    """One unlabeled domain document."""

    id: str
    text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalPair:
    """One held-out question with its reference answer."""

    id: str
    question: str
    reference_answer: str


def _iter_records(path: Path | str) -> Iterable[tuple[int, dict]]:
    """Yield (line_number, record) for every non-blank line of a JSONL file."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"file not found: {path}")
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def _require_str(record: dict, key: str, path: Path | str, lineno: int) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise CorpusError(f"{path}:{lineno}: missing or non-string field {key!r}")
    return value


def load_documents(path: Path | str) -> list[KnowledgeDocument]:
    """Load the document collection, preserving file order.

    Raises :class:`CorpusError` on a missing file, a malformed line,
    a duplicate id, or a document whose text is blank.
    """
    docs: list[KnowledgeDocument] = []
    seen: dict[str, int] = {}
    for lineno, record in _iter_records(path):
        doc_id = _require_str(record, "id", path, lineno)
        text = _require_str(record, "text", path, lineno)
        if not text.strip():
            raise CorpusError(f"{path}:{lineno}: document {doc_id!r} has empty text")
        if doc_id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate document id {doc_id!r}"
                f" (first seen on line {seen[doc_id]})"
            )
        seen[doc_id] = lineno
        metadata = record.get("metadata", {})
        if not isinstance(metadata, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
        ):
            raise CorpusError(f"{path}:{lineno}: metadata must be a flat string-to-string map")
        docs.append(KnowledgeDocument(id=doc_id, text=text, metadata=dict(metadata)))
    return docs


def load_eval_set(path: Path | str) -> list[EvalPair]:
    """Load the evaluation QA set, preserving file order."""
    pairs: list[EvalPair] = []
    seen: dict[str, int] = {}
    for lineno, record in _iter_records(path):
        pair_id = _require_str(record, "id", path, lineno)
        question = _require_str(record, "question", path, lineno)
        answer = _require_str(record, "reference_answer", path, lineno)
        if not question.strip():
            raise CorpusError(f"{path}:{lineno}: eval pair {pair_id!r} has empty question")
        if not answer.strip():
            raise CorpusError(f"{path}:{lineno}: eval pair {pair_id!r} has empty reference_answer")
        if pair_id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate eval id {pair_id!r}"
                f" (first seen on line {seen[pair_id]})"
            )
        seen[pair_id] = lineno
        pairs.append(EvalPair(id=pair_id, question=question, reference_answer=answer))
    return pairs


def save_documents(docs: Iterable[KnowledgeDocument], path: Path | str) -> None:
    """Write documents back to JSONL; ``load_documents`` round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            record: dict = {"id": doc.id, "text": doc.text}
            if doc.metadata:
                record["metadata"] = doc.metadata
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def save_eval_set(pairs: Iterable[EvalPair], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            record = {
                "id": pair.id,
                "question": pair.question,
                "reference_answer": pair.reference_answer,
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def clip_text(text: str, char_budget: int) -> str:
    """Truncate oversized document text to the configured character budget."""
    if char_budget <= 0 or len(text) <= char_budget:
        return text
    return text[:char_budget]
