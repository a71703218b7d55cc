"""Prompt templates and rendering.

Templates are plain text files with ``{STATEMENT}`` and ``{TOPIC}``
placeholders; newlines in the file are newlines in the prompt. A template
set is one user turn for zero-shot labeling, or two user turns for
zero-shot chain-of-thought: the explanation request, then the
answer-selection turn sent after the model's explanation is appended to the
conversation.

The built-in templates cover the four stock tasks (stance, misinformation,
ideology, humor); other tasks must supply template files via config.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from ..core import Document, RedctError, TaskSchema


class PromptError(RedctError):
    """Template missing, unrenderable, or incompatible with a document."""


TOPIC_SLOT = "{TOPIC}"
STATEMENT_SLOT = "{STATEMENT}"

# (task_id, prompt_style) -> packaged template file names, one per user turn.
_DEFAULT_TEMPLATE_FILES = {
    ("stance", "zero_shot"): ("stance_zero_shot.txt",),
    ("stance", "zero_shot_cot"): (
        "stance_zero_shot_cot_turn1.txt",
        "stance_zero_shot_cot_turn2.txt",
    ),
    ("misinformation", "zero_shot"): ("misinformation_zero_shot.txt",),
    ("ideology", "zero_shot"): ("ideology_zero_shot.txt",),
    ("humor", "zero_shot"): ("humor_zero_shot.txt",),
}


def _read_packaged(name: str) -> str:
    text = resources.files("redct").joinpath(f"templates/{name}").read_text(encoding="utf-8")
    return text.rstrip("\n")


@dataclass(frozen=True)
class PromptTemplates:
    """The user-turn template texts for one (task, style) combination."""

    turns: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.turns) not in (1, 2):
            raise PromptError(f"expected 1 or 2 template turns, got {len(self.turns)}")

    @property
    def needs_topic(self) -> bool:
        return any(TOPIC_SLOT in t for t in self.turns)

    @classmethod
    def for_schema(cls, schema: TaskSchema) -> "PromptTemplates":
        """Built-in templates for the schema's task and prompt style."""
        key = (schema.task_id, schema.prompt_style)
        names = _DEFAULT_TEMPLATE_FILES.get(key)
        if names is None:
            raise PromptError(
                f"no built-in template for task {schema.task_id!r} with style "
                f"{schema.prompt_style!r}; supply template files in the config"
            )
        return cls(tuple(_read_packaged(n) for n in names))

    @classmethod
    def from_files(cls, paths: Sequence[Path | str]) -> "PromptTemplates":
        turns = []
        for p in paths:
            p = Path(p)
            if not p.exists():
                raise PromptError(f"template file not found: {p}")
            turns.append(p.read_text(encoding="utf-8").rstrip("\n"))
        return cls(tuple(turns))


def render_prompt(
    doc: Document, schema: TaskSchema, templates: Optional[PromptTemplates] = None
) -> tuple[str, ...]:
    """Render the user turn(s) for `doc`: one turn, or two for CoT.

    For chain-of-thought, the second turn is sent after the model's
    explanation reply; the explanation reaches the model through the chat
    history, not through this text.
    """
    templates = templates or PromptTemplates.for_schema(schema)
    rendered = []
    for turn in templates.turns:
        if TOPIC_SLOT in turn:
            if not doc.target:
                raise PromptError(
                    f"document {doc.doc_id!r} has no target but the "
                    f"{schema.task_id!r} template requires one"
                )
            turn = turn.replace(TOPIC_SLOT, doc.target)
        rendered.append(turn.replace(STATEMENT_SLOT, doc.text))
    return tuple(rendered)
