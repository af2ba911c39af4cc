"""Prompt templates are plain text files with {name} placeholders.

They ship as package data but are configuration, not code: an operator can
point `prompts_dir` at a directory of same-named files to swap wording
without touching the engine. Substitution is literal string replacement,
so braces inside the substituted values (or elsewhere in the template) are
inert.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path


class PromptError(ValueError):
    pass


class PromptLibrary:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None

    def raw(self, name: str) -> str:
        filename = f"{name}.txt"
        if self.directory is not None:
            override = self.directory / filename
            if override.exists():
                return override.read_text(encoding="utf-8")
        ref = resources.files("icat").joinpath("prompts", filename)
        try:
            return ref.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise PromptError(f"unknown prompt template {name!r}") from exc

    def render(self, name: str, **values: str) -> str:
        text = self.raw(name)
        for key, value in values.items():
            placeholder = "{" + key + "}"
            if placeholder not in text:
                raise PromptError(f"template {name!r} has no placeholder {placeholder}")
            text = text.replace(placeholder, str(value))
        return text


DEFAULT_PROMPTS = PromptLibrary()
