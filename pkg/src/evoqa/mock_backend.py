"""In-process mock backends.

Two flavors:

* :class:`DeterministicMockBackend` -- stateless; every response is a pure
  function of the request (plus the mock tag), so identical requests yield
  byte-identical responses across calls, runs, and processes. This is what
  ``mock:`` URLs resolve to by default and what desk-scale pipeline runs
  use in place of a served model.
* :class:`ScriptedBackend` -- a programmable test double with canned chat
  replies and canned logprobs, for unit tests that need exact values.

The mock tokenizer is whitespace splitting: each token is a run of
non-whitespace characters plus any whitespace that follows it, so a token
count for text ``A`` equals ``len(A.split())`` and a context ending in
whitespace aligns exactly at the context/continuation boundary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from ._util import stable_int
from .backend import Backend, GenerationParams, Message
from .errors import BackendError

_registry: dict[str, Backend] = {}


def register_backend(url: str, backend: Backend) -> None:
    """Attach a backend instance to a ``mock:`` URL for the current process."""
    if not url.startswith("mock:"):
        raise ValueError(f"only mock: URLs can be registered, got {url!r}")
    _registry[url] = backend


def unregister_backend(url: str) -> None:
    _registry.pop(url, None)


def resolve_mock(url: str) -> Backend:
    """Registered instance if present, otherwise the deterministic mock."""
    backend = _registry.get(url)
    if backend is not None:
        return backend
    return DeterministicMockBackend(url)


def whitespace_tokenize(text: str) -> tuple[list[str], list[int]]:
    """Split into tokens carrying trailing whitespace; returns (tokens, offsets).

    Concatenating the tokens reproduces ``text`` exactly. Leading whitespace
    attaches to the first token.
    """
    matches = list(re.finditer(r"\S+\s*", text))
    if not matches:
        if not text:
            return [], []
        return [text], [0]
    tokens: list[str] = []
    offsets: list[int] = []
    for idx, m in enumerate(matches):
        token, offset = m.group(0), m.start()
        if idx == 0 and offset > 0:
            token, offset = text[:offset] + token, 0
        tokens.append(token)
        offsets.append(offset)
    return tokens, offsets


class DeterministicMockBackend:
    """Stateless fake model keyed by the mock tag.

    Replies are synthesized from a stable hash of (tag, model name, prompt,
    seed), so different model names behave like different model generations
    while staying fully reproducible. At temperature 0 the seed is ignored,
    mirroring deterministic decoding.
    """

    def __init__(self, tag: str):
        self.tag = tag

    def _digest(self, *parts: object) -> int:
        return stable_int(self.tag, *parts)

    def complete_chat(self, model_name: str, messages: Sequence[Message], params: GenerationParams) -> str:
        content = messages[-1].get("content", "")
        seed_part = "greedy" if params.temperature == 0 else params.seed
        h = self._digest(model_name, content, seed_part)
        body = content.rstrip()
        if body.endswith("Question:"):
            return f"What should be checked when subsystem {h:08x} reports a fault?"
        if "Knowledge fragment:" in body:
            return (
                f"To resolve condition {h:08x}, inspect the primary module, restart the "
                f"affected service, and confirm the alarm clears within {h % 59 + 1} minutes."
            )
        return f"Standard procedure {h:08x}: verify the settings, apply the fix, and confirm recovery."

    def echo_logprobs(self, model_name: str, prompt: str) -> tuple[list[str], list[float | None], list[int]]:
        tokens, offsets = whitespace_tokenize(prompt)
        logprobs: list[float | None] = []
        for i, token in enumerate(tokens):
            u = self._digest(model_name, prompt, i, token) / float((1 << 31) - 1)
            logprobs.append(-(0.1 + 2.4 * u))
        return tokens, logprobs, offsets


@dataclass
class _ChatRule:
    reply: str
    when: str | None = None  # substring of the last message content
    times: int | None = None  # None = unlimited


@dataclass
class _ScoreRule:
    logprobs: tuple[float, ...]
    context: str | None = None  # None = any
    continuation: str | None = None  # None = the whole remainder


@dataclass
class ScriptedBackend:
    """Programmable test double. Rules are matched in registration order."""

    chat_rules: list[_ChatRule] = field(default_factory=list)
    score_rules: list[_ScoreRule] = field(default_factory=list)
    chat_calls: list[tuple[str, list[Message], GenerationParams]] = field(default_factory=list)
    score_calls: list[tuple[str, str]] = field(default_factory=list)

    def script_reply(self, reply: str, *, when: str | None = None, times: int | None = None) -> "ScriptedBackend":
        self.chat_rules.append(_ChatRule(reply=reply, when=when, times=times))
        return self

    def script_logprobs(
        self,
        logprobs: Sequence[float],
        *,
        continuation: str | None = None,
        context: str | None = None,
    ) -> "ScriptedBackend":
        self.score_rules.append(
            _ScoreRule(logprobs=tuple(logprobs), context=context, continuation=continuation)
        )
        return self

    def complete_chat(self, model_name: str, messages: Sequence[Message], params: GenerationParams) -> str:
        self.chat_calls.append((model_name, list(messages), params))
        content = messages[-1].get("content", "")
        for rule in self.chat_rules:
            if rule.times == 0:
                continue
            if rule.when is not None and rule.when not in content:
                continue
            if rule.times is not None:
                rule.times -= 1
            return rule.reply
        raise BackendError(f"no scripted reply matches the request (last content: {content[:80]!r})")

    def _match(self, rule: _ScoreRule, prompt: str) -> tuple[str, str] | None:
        """Return (context, continuation) if the rule applies to this prompt."""
        if rule.context is not None and rule.continuation is not None:
            if rule.context + rule.continuation == prompt:
                return rule.context, rule.continuation
            return None
        if rule.context is not None:
            if prompt.startswith(rule.context):
                return rule.context, prompt[len(rule.context):]
            return None
        if rule.continuation is not None:
            if prompt.endswith(rule.continuation):
                return prompt[: len(prompt) - len(rule.continuation)], rule.continuation
            return None
        return "", prompt

    def echo_logprobs(self, model_name: str, prompt: str) -> tuple[list[str], list[float | None], list[int]]:
        self.score_calls.append((model_name, prompt))
        for rule in self.score_rules:
            split = self._match(rule, prompt)
            if split is None:
                continue
            context, continuation = split
            ctx_tokens, ctx_offsets = whitespace_tokenize(context)
            cont_tokens, cont_offsets = whitespace_tokenize(continuation)
            if len(cont_tokens) != len(rule.logprobs):
                raise BackendError(
                    f"scripted logprob count {len(rule.logprobs)} does not match the "
                    f"{len(cont_tokens)} whitespace tokens of {continuation!r}"
                )
            tokens = ctx_tokens + cont_tokens
            logprobs: list[float | None] = [-0.5] * len(ctx_tokens) + list(rule.logprobs)
            offsets = list(ctx_offsets) + [off + len(context) for off in cont_offsets]
            return tokens, logprobs, offsets
        raise BackendError(f"no scripted logprobs match the prompt {prompt[:80]!r}")
