"""Prompt templates.

Templates are plain text files with ``{Knowledge}`` / ``{Question}``
placeholders, shipped as versioned package data and overridable by path in
the run config. Rendering is single-pass: placeholder-looking text inside a
substituted value is never itself substituted. Every run records the SHA-256
of the exact template files it used.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ._util import sha256_text
from .errors import ConfigError

KNOWLEDGE_PLACEHOLDER = "{Knowledge}"
QUESTION_PLACEHOLDER = "{Question}"

_PLACEHOLDER_RE = re.compile(r"\{Knowledge\}|\{Question\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    sha256: str

    def render(self, values: dict[str, str]) -> str:
        """Substitute placeholders in one pass and strip trailing newlines."""
        rendered = _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(0), m.group(0)), self.text)
        return rendered.rstrip("\n")


def load_template(path: Path | str, required: tuple[str, ...]) -> PromptTemplate:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"template file not found: {path}")
    text = path.read_text(encoding="utf-8")
    for placeholder in required:
        if placeholder not in text:
            raise ConfigError(f"template {path} is missing the {placeholder} placeholder")
    return PromptTemplate(name=path.name, text=text, sha256=sha256_text(text))


def _packaged(name: str) -> Path:
    return Path(str(resources.files("evoqa").joinpath("templates", name)))


def default_question_template_path() -> Path:
    return _packaged("question_v1.txt")


def default_answer_template_path() -> Path:
    return _packaged("answer_v1.txt")


def load_question_template(path: Path | str | None = None) -> PromptTemplate:
    return load_template(path or default_question_template_path(), (KNOWLEDGE_PLACEHOLDER,))


def load_answer_template(path: Path | str | None = None) -> PromptTemplate:
    return load_template(
        path or default_answer_template_path(), (KNOWLEDGE_PLACEHOLDER, QUESTION_PLACEHOLDER)
    )
