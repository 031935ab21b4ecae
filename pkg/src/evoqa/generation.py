"""Instruction-data generation: one new QA pair per document per iteration.

For each document the generator model is asked for a question, then for an
answer grounded in both the document and the question. Outputs that fail
the cheap validity heuristics are re-sampled a bounded number of times;
documents that never produce a valid pair are dropped and counted. The
whole phase fails only when the dropped fraction exceeds the configured
threshold.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import backend
from ._util import run_parallel, stable_int
from .backend import BackendSettings, GenerationParams, Message, ModelRef
from .corpus import KnowledgeDocument, clip_text
from .errors import BackendError, CorpusError, EmptyCompletionError, GenerationError
from .templates import (
    KNOWLEDGE_PLACEHOLDER,
    QUESTION_PLACEHOLDER,
    PromptTemplate,
)

logger = logging.getLogger(__name__)

QUESTION_MARKS = ("?", "？")  # ASCII and fullwidth

DEFAULT_DANGLING_PATTERNS = (
    "the document above",
    "as mentioned in the fragment",
    "the fragment above",
    "as mentioned in the document",
    "the provided document",
)


@dataclass(frozen=True)
class QAPair:
    """One instruction sample with its provenance."""

    id: str
    iteration: int
    doc_id: str
    question: str
    answer: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "iteration": self.iteration,
            "doc_id": self.doc_id,
            "question": self.question,
            "answer": self.answer,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QAPair":
        return cls(
            id=data["id"],
            iteration=int(data["iteration"]),
            doc_id=data["doc_id"],
            question=data["question"],
            answer=data["answer"],
        )


@dataclass
class GenerationStats:
    generated: int = 0
    rejected: int = 0
    regenerated: int = 0
    truncated: int = 0
    rejected_doc_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "generated": self.generated,
            "rejected": self.rejected,
            "regenerated": self.regenerated,
            "truncated": self.truncated,
            "rejected_doc_ids": sorted(self.rejected_doc_ids),
        }


@dataclass
class IterationDataset:
    """All QA pairs produced in one iteration, ordered by source doc id."""

    iteration: int
    pairs: list[QAPair]
    stats: GenerationStats = field(default_factory=GenerationStats)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str | None = None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(ok=True)

    @classmethod
    def reject(cls, reason: str) -> "Verdict":
        return cls(ok=False, reason=reason)


@dataclass(frozen=True)
class GenerationSettings:
    regeneration_attempts: int = 2  # extra samples after a failed validation
    max_failure_fraction: float = 0.2
    char_budget: int = 8000
    question_max_chars: int = 300
    answer_min_chars: int = 10
    dangling_patterns: tuple[str, ...] = DEFAULT_DANGLING_PATTERNS

    def to_dict(self) -> dict:
        return {
            "regeneration_attempts": self.regeneration_attempts,
            "max_failure_fraction": self.max_failure_fraction,
            "char_budget": self.char_budget,
            "question_max_chars": self.question_max_chars,
            "answer_min_chars": self.answer_min_chars,
            "dangling_patterns": list(self.dangling_patterns),
        }


def qa_pair_id(iteration: int, doc_id: str) -> str:
    return f"it{iteration:03d}-{doc_id}"


def build_question_prompt(
    doc: KnowledgeDocument,
    template: PromptTemplate,
    char_budget: int = 8000,
) -> list[Message]:
    """Render the question-generation prompt for one document."""
    text = clip_text(doc.text, char_budget)
    if len(text) < len(doc.text):
        logger.warning("document %s truncated to %d chars for prompting", doc.id, char_budget)
    rendered = template.render({KNOWLEDGE_PLACEHOLDER: text})
    return [{"role": "user", "content": rendered}]


def build_answer_prompt(
    doc: KnowledgeDocument,
    question: str,
    template: PromptTemplate,
    char_budget: int = 8000,
) -> list[Message]:
    """Render the answer-generation prompt for a document and its question."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    text = clip_text(doc.text, char_budget)
    rendered = template.render({KNOWLEDGE_PLACEHOLDER: text, QUESTION_PLACEHOLDER: question})
    return [{"role": "user", "content": rendered}]


def validate_question(text: str, max_chars: int = 300) -> Verdict:
    """Heuristic gate: exactly one question mark, within the length budget."""
    stripped = text.strip()
    if not stripped:
        return Verdict.reject("empty")
    marks = sum(stripped.count(mark) for mark in QUESTION_MARKS)
    if marks == 0:
        return Verdict.reject("not interrogative (no question mark)")
    if marks > 1:
        return Verdict.reject("multiple sub-questions (more than one question mark)")
    if len(stripped) > max_chars:
        return Verdict.reject(f"longer than {max_chars} characters")
    return Verdict.accept()


def validate_answer(
    text: str,
    min_chars: int = 10,
    dangling_patterns: Sequence[str] = DEFAULT_DANGLING_PATTERNS,
) -> Verdict:
    """Heuristic gate: long enough and free of references back to the source."""
    stripped = text.strip()
    if not stripped:
        return Verdict.reject("empty")
    if len(stripped) < min_chars:
        return Verdict.reject(f"shorter than {min_chars} characters")
    lowered = stripped.lower()
    for pattern in dangling_patterns:
        if pattern.lower() in lowered:
            return Verdict.reject(f"dangling reference: {pattern!r}")
    return Verdict.accept()


@dataclass
class _DocOutcome:
    pair: QAPair | None = None
    reason: str | None = None
    regenerated: int = 0
    truncated: bool = False


def _attempt_params(params: GenerationParams, doc_id: str, kind: str, attempt: int) -> GenerationParams:
    if params.seed is None:
        return params
    return replace(params, seed=stable_int(params.seed, doc_id, kind, attempt))


def _sample_validated(
    model: ModelRef,
    messages: list[Message],
    params: GenerationParams,
    doc_id: str,
    kind: str,
    validate,
    attempts: int,
    settings: BackendSettings,
) -> tuple[str | None, str | None, int]:
    """Sample up to ``attempts`` times; returns (text, last_reason, resamples)."""
    reason = None
    regenerated = 0
    for attempt in range(attempts):
        if attempt > 0:
            regenerated += 1
        try:
            text = backend.generate(model, messages, _attempt_params(params, doc_id, kind, attempt), settings)
        except EmptyCompletionError:
            reason = "empty completion"
            continue
        verdict = validate(text)
        if verdict.ok:
            return text.strip(), None, regenerated
        reason = verdict.reason
    return None, reason, regenerated


def _generate_for_doc(
    doc: KnowledgeDocument,
    generator: ModelRef,
    iteration: int,
    params: GenerationParams,
    question_template: PromptTemplate,
    answer_template: PromptTemplate,
    settings: GenerationSettings,
    backend_settings: BackendSettings,
) -> _DocOutcome:
    outcome = _DocOutcome(truncated=len(doc.text) > settings.char_budget)
    attempts = settings.regeneration_attempts + 1
    try:
        q_messages = build_question_prompt(doc, question_template, settings.char_budget)
        question, reason, resampled = _sample_validated(
            generator, q_messages, params, doc.id, "question",
            lambda t: validate_question(t, settings.question_max_chars),
            attempts, backend_settings,
        )
        outcome.regenerated += resampled
        if question is None:
            outcome.reason = f"question rejected: {reason}"
            return outcome
        a_messages = build_answer_prompt(doc, question, answer_template, settings.char_budget)
        answer, reason, resampled = _sample_validated(
            generator, a_messages, params, doc.id, "answer",
            lambda t: validate_answer(t, settings.answer_min_chars, settings.dangling_patterns),
            attempts, backend_settings,
        )
        outcome.regenerated += resampled
        if answer is None:
            outcome.reason = f"answer rejected: {reason}"
            return outcome
    except BackendError as exc:
        outcome.reason = f"backend error: {exc}"
        return outcome
    outcome.pair = QAPair(
        id=qa_pair_id(iteration, doc.id),
        iteration=iteration,
        doc_id=doc.id,
        question=question,
        answer=answer,
    )
    return outcome


def generate_iteration_dataset(
    docs: Sequence[KnowledgeDocument],
    generator: ModelRef,
    iteration: int,
    params: GenerationParams,
    question_template: PromptTemplate,
    answer_template: PromptTemplate,
    settings: GenerationSettings = GenerationSettings(),
    backend_settings: BackendSettings = backend.DEFAULT_SETTINGS,
) -> IterationDataset:
    """Produce at most one validated QA pair per document.

    Documents run concurrently up to the backend parallelism bound; the
    result is joined by doc id, so output order does not depend on
    completion order.
    """
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    tasks = [
        (
            doc.id,
            (lambda d=doc: _generate_for_doc(
                d, generator, iteration, params,
                question_template, answer_template, settings, backend_settings,
            )),
        )
        for doc in docs
    ]
    outcomes, errors = run_parallel(tasks, backend_settings.max_parallel)
    for doc_id, exc in errors.items():
        outcomes[doc_id] = _DocOutcome(reason=f"unexpected error: {exc}")

    stats = GenerationStats()
    pairs: list[QAPair] = []
    failure_reasons: dict[str, str] = {}
    for doc_id in sorted(outcomes):
        outcome = outcomes[doc_id]
        stats.regenerated += outcome.regenerated
        stats.truncated += 1 if outcome.truncated else 0
        if outcome.pair is not None:
            pairs.append(outcome.pair)
            stats.generated += 1
        else:
            stats.rejected += 1
            stats.rejected_doc_ids.append(doc_id)
            failure_reasons[doc_id] = outcome.reason or "unknown"
            logger.warning("document %s yielded no valid QA: %s", doc_id, outcome.reason)

    total = len(list(docs))
    if total and stats.rejected / total > settings.max_failure_fraction:
        detail = "; ".join(f"{d}: {failure_reasons[d]}" for d in sorted(failure_reasons)[:10])
        raise GenerationError(
            f"{stats.rejected}/{total} documents yielded no valid QA "
            f"(limit {settings.max_failure_fraction:.0%}): {detail}"
        )
    return IterationDataset(iteration=iteration, pairs=pairs, stats=stats)


def save_dataset(dataset: IterationDataset, path: Path | str) -> None:
    """Persist pairs as JSONL; serialization is deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for pair in dataset.pairs:
            f.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")


def load_pairs(path: Path | str) -> list[QAPair]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset file not found: {path}")
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                pairs.append(QAPair.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed QA record: {exc}") from exc
    return pairs
