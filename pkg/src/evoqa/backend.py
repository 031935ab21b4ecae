"""LLM backend abstraction.

Two services are needed from a backend: chat-style text generation (for QA
construction and evaluation) and echoed token log-probabilities (for
difficulty scoring). The HTTP implementation speaks the OpenAI-compatible
wire format:

* ``generate``            -> ``POST {base}/v1/chat/completions``
* ``score_continuation``  -> ``POST {base}/v1/completions`` with
  ``prompt = context + continuation``, ``echo = true``, ``logprobs = 1`` and
  ``max_tokens = 0``; the continuation boundary is located by character
  offset ``len(context)`` against the returned ``text_offset`` array.

Backends are addressed through :class:`ModelRef`. URLs starting with
``mock:`` resolve to the in-process deterministic backend (see
:mod:`evoqa.mock_backend`), everything else to the HTTP client. The client
is stateless between calls; no operation mutates shared state.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .errors import (
    BackendError,
    CapabilityError,
    EmptyCompletionError,
    RequestRejectedError,
    TokenAlignmentError,
    TransportError,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "EVOQA_API_KEY"

GENERATION_ROLES = ("generator", "evaluatee")
SCORER_ROLE = "scorer"
_VALID_ROLES = GENERATION_ROLES + (SCORER_ROLE,)

Message = dict[str, str]


@dataclass(frozen=True)
class ModelRef:
    """Addressable model: where it is served, what it is called, how it is used."""

    backend_url: str
    model_name: str
    role: str = "generator"

    def __post_init__(self) -> None:
        if self.role not in _VALID_ROLES:
            raise ValueError(f"role must be one of {_VALID_ROLES}, got {self.role!r}")

    def to_dict(self) -> dict[str, str]:
        return {"backend_url": self.backend_url, "model_name": self.model_name, "role": self.role}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelRef":
        return cls(
            backend_url=data["backend_url"],
            model_name=data["model_name"],
            role=data.get("role", "generator"),
        )


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    max_tokens: int = 512
    seed: int | None = None
    stop: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")


@dataclass(frozen=True)
class TokenScore:
    token_text: str
    logprob: float


@dataclass(frozen=True)
class ScoredContinuation:
    context: str
    continuation: str
    token_scores: tuple[TokenScore, ...]


@dataclass(frozen=True)
class BackendSettings:
    """Client-level knobs shared by all requests of a run."""

    timeout_seconds: float = 120.0
    max_parallel: int = 4
    max_attempts: int = 3
    backoff_seconds: float = 1.0  # doubles per retry, capped at 30s

    def to_dict(self) -> dict:
        return {
            "timeout_seconds": self.timeout_seconds,
            "max_parallel": self.max_parallel,
            "max_attempts": self.max_attempts,
            "backoff_seconds": self.backoff_seconds,
        }


DEFAULT_SETTINGS = BackendSettings()


class Backend(Protocol):
    """Operations a concrete backend must provide."""

    def complete_chat(self, model_name: str, messages: Sequence[Message], params: GenerationParams) -> str:
        """Return the assistant completion text for the given messages."""

    def echo_logprobs(self, model_name: str, prompt: str) -> tuple[list[str], list[float | None], list[int]]:
        """Return (tokens, logprobs, text_offsets) covering the whole prompt."""


def split_continuation(
    tokens: Sequence[str],
    logprobs: Sequence[float | None],
    offsets: Sequence[int],
    context: str,
    continuation: str,
) -> tuple[TokenScore, ...]:
    """Slice echoed prompt tokens at the character boundary ``len(context)``.

    The boundary must coincide with a token start; otherwise the backend's
    tokenizer merged context and continuation text and per-token scores for
    the continuation alone are not recoverable.
    """
    boundary = len(context)
    if boundary == 0:
        start = 0
    else:
        try:
            start = next(i for i, off in enumerate(offsets) if off == boundary)
        except StopIteration:
            raise TokenAlignmentError(
                f"no echoed token starts at character offset {boundary}; "
                "the tokenizer does not split at the context/continuation boundary"
            ) from None
    scores = []
    for i in range(start, len(tokens)):
        lp = logprobs[i]
        if lp is None:
            raise TokenAlignmentError(
                f"backend returned no logprob for continuation token at index {i} "
                f"({tokens[i]!r}); it cannot score the sequence head"
            )
        scores.append(TokenScore(token_text=tokens[i], logprob=float(lp)))
    if continuation and not scores:
        raise TokenAlignmentError("backend echoed no tokens for a non-empty continuation")
    return tuple(scores)


class HttpBackend:
    """OpenAI-compatible HTTP client.

    Transient transport failures and HTTP 429/5xx are retried with capped
    exponential backoff; other 4xx statuses are surfaced immediately with
    the response body. API credentials come only from the environment
    (``EVOQA_API_KEY``), never from configuration files.
    """

    def __init__(self, base_url: str, settings: BackendSettings = DEFAULT_SETTINGS):
        self.base_url = base_url.rstrip("/")
        self.settings = settings

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        attempts = self.settings.max_attempts
        delay = self.settings.backoff_seconds
        last_status: int | None = None
        last_error = "transport failure"
        for attempt in range(1, attempts + 1):
            try:
                response = httpx.post(
                    url, json=payload, headers=self._headers(),
                    timeout=self.settings.timeout_seconds,
                )
            except httpx.HTTPError as exc:
                last_status, last_error = None, str(exc)
            else:
                if response.status_code < 400:
                    try:
                        return response.json()
                    except ValueError as exc:
                        raise BackendError(f"non-JSON response from {url}: {exc}") from exc
                if response.status_code == 429 or response.status_code >= 500:
                    last_status = response.status_code
                    last_error = f"HTTP {response.status_code}"
                else:
                    raise RequestRejectedError(
                        f"{url} rejected the request with HTTP {response.status_code}: "
                        f"{response.text[:500]}",
                        status=response.status_code,
                        body=response.text,
                    )
            if attempt < attempts:
                logger.warning("request to %s failed (%s), retrying in %.1fs", url, last_error, delay)
                time.sleep(delay)
                delay = min(delay * 2, 30.0)
        raise TransportError(
            f"request to {url} failed after {attempts} attempts (last error: {last_error})",
            attempts=attempts,
            last_status=last_status,
        )

    def complete_chat(self, model_name: str, messages: Sequence[Message], params: GenerationParams) -> str:
        payload: dict = {
            "model": model_name,
            "messages": list(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        if params.stop:
            payload["stop"] = list(params.stop)
        data = self._post("/v1/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {data!r}") from exc
        if not content or not content.strip():
            raise EmptyCompletionError(f"model {model_name!r} returned an empty completion")
        return content

    def echo_logprobs(self, model_name: str, prompt: str) -> tuple[list[str], list[float | None], list[int]]:
        payload = {
            "model": model_name,
            "prompt": prompt,
            "echo": True,
            "logprobs": 1,
            "max_tokens": 0,
        }
        data = self._post("/v1/completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            logprobs = lp["token_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityError(
                f"backend at {self.base_url} does not return echoed prompt logprobs "
                "(choices[0].logprobs.{tokens,token_logprobs,text_offset} missing)"
            ) from exc
        return list(tokens), list(logprobs), [int(o) for o in offsets]


def resolve_backend(model: ModelRef, settings: BackendSettings = DEFAULT_SETTINGS) -> Backend:
    """Map a ModelRef onto a concrete backend instance."""
    if model.backend_url.startswith("mock:"):
        from . import mock_backend

        return mock_backend.resolve_mock(model.backend_url)
    if model.backend_url.startswith(("http://", "https://")):
        return HttpBackend(model.backend_url, settings)
    raise BackendError(f"unsupported backend URL: {model.backend_url!r}")


def generate(
    model: ModelRef,
    messages: Sequence[Message],
    params: GenerationParams,
    settings: BackendSettings = DEFAULT_SETTINGS,
) -> str:
    """Run one chat completion and return the assistant text."""
    if model.role not in GENERATION_ROLES:
        raise ValueError(f"model role must be one of {GENERATION_ROLES} to generate, got {model.role!r}")
    if not messages:
        raise ValueError("messages must be non-empty")
    return resolve_backend(model, settings).complete_chat(model.model_name, messages, params)


def score_continuation(
    scorer: ModelRef,
    context: str,
    continuation: str,
    settings: BackendSettings = DEFAULT_SETTINGS,
) -> ScoredContinuation:
    """Per-token logprobs of ``continuation`` conditioned on ``context``.

    An empty ``context`` yields the unconditioned scoring mode: the
    continuation is scored as the whole prompt, with nothing prepended (in
    particular no chat template), so the result measures the text's
    intrinsic predictability.
    """
    if scorer.role != SCORER_ROLE:
        raise ValueError(f"scoring requires a ModelRef with role={SCORER_ROLE!r}, got {scorer.role!r}")
    if not continuation:
        raise ValueError("continuation must be non-empty")
    backend = resolve_backend(scorer, settings)
    tokens, logprobs, offsets = backend.echo_logprobs(scorer.model_name, context + continuation)
    token_scores = split_continuation(tokens, logprobs, offsets, context, continuation)
    return ScoredContinuation(context=context, continuation=continuation, token_scores=token_scores)
