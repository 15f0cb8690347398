"""Prompt assembly: templates, bundles, and the context budget.

Templates are versioned text files with ``[section]`` headers and ``{slot}``
placeholders (see ``templates/``). A session can override them by pointing
``EngineSettings.template_dir`` at a directory with files of the same names.

A PromptBundle keeps the retrieved-memory excerpts as separate blocks so the
budget enforcer can drop them one at a time, lowest similarity first, without
touching any fixed section.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .config import EngineSettings
from .errors import BudgetError, InvalidMetaError, InvalidPlanError, TemplateError
from .memory import MemoryEntry
from .state import SessionMeta, SessionState, Plan
from .wire import ResponseShape, render_output_format

TEMPLATE_NAMES = ("init", "generate-writer", "generate-fiction", "select-plan")

_SECTION_HEADER = re.compile(r"^\[([a-z0-9-]+)\]\s*$")
_FORMATTER = string.Formatter()

_FIRST_PERSON_INSTRUCTION = (
    "Narrate in the first person, from the main character's point of view.")
_THIRD_PERSON_INSTRUCTION = "Narrate in the third person."


def estimate_tokens(text: str) -> int:
    """ceil(characters / 4); provider-agnostic and monotone in length."""
    return -(-len(text) // 4)


@dataclass(frozen=True)
class PromptTemplate:
    """Ordered labeled sections with required placeholder slots."""

    name: str
    sections: tuple[tuple[str, str], ...]
    placeholders: frozenset[str] = field(init=False)

    def __post_init__(self):
        slots = set()
        for _, text in self.sections:
            for _, slot, _, _ in _FORMATTER.parse(text):
                if slot:
                    slots.add(slot)
        object.__setattr__(self, "placeholders", frozenset(slots))

    @classmethod
    def parse(cls, name: str, source: str) -> "PromptTemplate":
        sections: list[tuple[str, str]] = []
        label: str | None = None
        buf: list[str] = []
        for line in source.splitlines():
            m = _SECTION_HEADER.match(line)
            if m:
                if label is not None:
                    sections.append((label, "\n".join(buf).strip()))
                label = m.group(1)
                buf = []
            elif label is None:
                if line.strip() and not line.lstrip().startswith("#"):
                    raise TemplateError(
                        f"template {name!r}: text before the first [section] header")
            else:
                buf.append(line)
        if label is not None:
            sections.append((label, "\n".join(buf).strip()))
        if not sections:
            raise TemplateError(f"template {name!r} has no sections")
        return cls(name, tuple(sections))

    def render(self, values: dict[str, str],
               skip_sections: frozenset[str] = frozenset()) -> list[tuple[str, str]]:
        """Fill every slot; missing values raise TemplateError."""
        missing = set(self.placeholders) - set(values)
        for section_label in skip_sections:
            for label, text in self.sections:
                if label == section_label:
                    for _, slot, _, _ in _FORMATTER.parse(text):
                        missing.discard(slot)
        if missing:
            raise TemplateError(
                f"template {self.name!r}: unfilled slots {sorted(missing)}")
        rendered = []
        for label, text in self.sections:
            if label in skip_sections:
                continue
            try:
                rendered.append((label, text.format_map(values)))
            except (KeyError, IndexError, ValueError) as e:
                raise TemplateError(f"template {self.name!r}, section {label!r}: {e}") from e
        return rendered


def load_template(name: str, template_dir: Path | None = None) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise TemplateError(f"unknown template {name!r}")
    if template_dir is not None:
        candidate = Path(template_dir) / f"{name}.txt"
        if candidate.is_file():
            return PromptTemplate.parse(name, candidate.read_text(encoding="utf-8"))
    source = resources.files("recurrent_scribe").joinpath(
        f"templates/{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate.parse(name, source)


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user"
    text: str


@dataclass(frozen=True)
class Block:
    """One piece of the user message. Only excerpt blocks may be trimmed."""

    kind: str  # "fixed" | "excerpt-intro" | "excerpt"
    text: str
    similarity: float = 0.0
    timestep: int = -1


@dataclass(frozen=True)
class PromptBundle:
    """Role-tagged messages ready for a chat-completion provider."""

    kind: str  # "init" | "generate" | "select"
    system_text: str
    blocks: tuple[Block, ...]
    reply_shape: ResponseShape
    messages: tuple[Message, ...] = field(init=False)
    token_estimate: int = field(init=False)

    def __post_init__(self):
        user_text = "\n\n".join(b.text for b in self.blocks)
        messages = (Message("system", self.system_text), Message("user", user_text))
        object.__setattr__(self, "messages", messages)
        object.__setattr__(self, "token_estimate",
                           sum(estimate_tokens(m.text) for m in messages))

    @property
    def excerpt_count(self) -> int:
        return sum(1 for b in self.blocks if b.kind == "excerpt")

    def flattened(self) -> str:
        return "\n\n".join(m.text for m in self.messages)


def _perspective_instruction(meta: SessionMeta) -> str:
    if meta.perspective == "first-person":
        return _FIRST_PERSON_INSTRUCTION
    return _THIRD_PERSON_INSTRUCTION


def _split_sections(rendered: list[tuple[str, str]]) -> tuple[str, list[tuple[str, str]]]:
    system_text = ""
    rest = []
    for label, text in rendered:
        if label == "system":
            system_text = text
        else:
            rest.append((label, text))
    return system_text, rest


def _format_hints(settings: EngineSettings, fiction: bool) -> dict[str, str]:
    plan_hint = ("an important choice for the main character, "
                 if fiction else "a plan for what happens next, ")
    return {
        "paragraph": ("the next paragraph of the story, "
                      f"{settings.content_words.minimum}-{settings.content_words.maximum} words"),
        "memory": ("the rewritten short-term memory, "
                   f"{settings.memory_sentences.minimum}-{settings.memory_sentences.maximum} sentences"),
        "plan": plan_hint + (f"{settings.plan_sentences.minimum}-"
                             f"{settings.plan_sentences.maximum} sentences"),
    }


def build_init_prompt(meta: SessionMeta,
                      settings: EngineSettings | None = None) -> PromptBundle:
    """The session-opening prompt.

    Asks only for the components the user did not supply: the opening
    paragraphs always, the initial short-term memory and candidate plans only
    when ``meta`` does not carry them.
    """
    settings = settings or EngineSettings()
    if not meta.background.strip():
        raise InvalidMetaError("session background must be non-empty")
    shape = ResponseShape(
        paragraph=True,
        memory=meta.initial_short_term is None,
        plan_count=0 if meta.initial_plan is not None else settings.plan_count,
    )
    template = load_template("init", settings.template_dir)
    values = {
        "title": meta.title,
        "genre": meta.genre,
        "background": meta.background,
        "perspective_instruction": _perspective_instruction(meta),
        "output_format": render_output_format(
            shape, settings.labels, _format_hints(settings, meta.mode == "fiction")),
    }
    system_text, rest = _split_sections(template.render(values))
    blocks = tuple(Block("fixed", text) for _, text in rest)
    return PromptBundle("init", system_text, blocks, shape)


def _excerpt_text(entry: MemoryEntry) -> str:
    return f"[Timestep {entry.timestep}] {entry.content_text}"


def build_generation_prompt(state: SessionState,
                            retrieved: Sequence[tuple[MemoryEntry, float]],
                            chosen: Plan,
                            settings: EngineSettings | None = None) -> PromptBundle:
    """The per-step generation prompt.

    ``retrieved`` is the scored result of querying long-term memory with the
    chosen plan's embedding, descending similarity. With no retrieved entries
    the retrieved-memory section is omitted entirely. Pure: identical inputs
    render byte-identical bundles.
    """
    settings = settings or EngineSettings()
    fiction = state.meta.mode == "fiction"
    template = load_template("generate-fiction" if fiction else "generate-writer",
                             settings.template_dir)
    shape = ResponseShape(paragraph=True, memory=True, plan_count=settings.plan_count)
    values = {
        "short_term_memory": state.short_term.text,
        "retrieved_memory": "",  # expanded into excerpt blocks below
        "previous_content": state.last_content.text,
        "current_plan": chosen.text,
        "output_format": render_output_format(
            shape, settings.labels, _format_hints(settings, fiction)),
    }
    skip = frozenset() if retrieved else frozenset({"retrieved-memory"})
    system_text, rest = _split_sections(template.render(values, skip_sections=skip))

    blocks: list[Block] = []
    for label, text in rest:
        if label == "retrieved-memory":
            blocks.append(Block("excerpt-intro", text.strip()))
            for entry, similarity in retrieved:
                blocks.append(Block("excerpt", _excerpt_text(entry),
                                    similarity=similarity, timestep=entry.timestep))
        else:
            blocks.append(Block("fixed", text))
    return PromptBundle("generate", system_text, tuple(blocks), shape)


def build_selector_prompt(state: SessionState, plans: Sequence[Plan],
                          settings: EngineSettings | None = None) -> PromptBundle:
    """The human-simulator prompt: pick one numbered plan and revise it."""
    settings = settings or EngineSettings()
    if not plans:
        raise InvalidPlanError("selector prompt needs a non-empty plan list")
    fiction = state.meta.mode == "fiction"
    framing = (
        "Decide which choice the main character should take next, then revise "
        "it so the action is as engaging as possible."
        if fiction else
        "Select the plan that makes the best next step for the story, then "
        "revise it so it reads as a clear, compelling outline.")
    numbered = "\n".join(f"{i}. {p.text}" for i, p in enumerate(plans, start=1))
    shape = ResponseShape(paragraph=False, memory=False, plan_count=0,
                          selector_of=len(plans))
    template = load_template("select-plan", settings.template_dir)
    values = {
        "selector_framing": framing,
        "short_term_memory": state.short_term.text,
        "candidate_plans": numbered,
        "output_format": render_output_format(shape, settings.labels),
    }
    system_text, rest = _split_sections(template.render(values))
    blocks = tuple(Block("fixed", text) for _, text in rest)
    return PromptBundle("select", system_text, blocks, shape)


def enforce_budget(bundle: PromptBundle, budget: int) -> PromptBundle:
    """Trim retrieved excerpts, lowest similarity first, to fit the budget.

    Fixed sections are never trimmed and retained blocks keep their order.
    Raises BudgetError when the bundle still exceeds the budget with zero
    excerpts left.
    """
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    current = bundle
    while current.token_estimate > budget:
        excerpts = [(i, b) for i, b in enumerate(current.blocks) if b.kind == "excerpt"]
        if not excerpts:
            raise BudgetError(
                f"prompt needs {current.token_estimate} tokens with no excerpts "
                f"left to trim (budget {budget})")
        drop_index = max(excerpts, key=lambda ib: (-ib[1].similarity, ib[0]))[0]
        kept = [b for i, b in enumerate(current.blocks) if i != drop_index]
        if not any(b.kind == "excerpt" for b in kept):
            kept = [b for b in kept if b.kind != "excerpt-intro"]
        current = PromptBundle(current.kind, current.system_text, tuple(kept),
                               current.reply_shape)
    return current


def repair_bundle(bundle: PromptBundle,
                  settings: EngineSettings | None = None) -> PromptBundle:
    """The one automatic retry after a parse failure: restate the format."""
    settings = settings or EngineSettings()
    note = ("Your previous reply was not in the required format. Reply again, "
            "and use exactly the format below, including every label on its "
            "own line.\n\n" + render_output_format(bundle.reply_shape, settings.labels))
    blocks = bundle.blocks + (Block("fixed", note),)
    return PromptBundle(bundle.kind, bundle.system_text, blocks, bundle.reply_shape)
