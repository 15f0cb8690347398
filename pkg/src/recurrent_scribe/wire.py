"""The labeled plain-text wire format for LLM responses.

Responses are plain text carved into sections by labels at the start of a
line, matched case-insensitively:

    Output Paragraph:
    <the next paragraph>
    Output Memory:
    <the rewritten short-term memory>
    Output Plan 1:
    <first candidate plan>
    ...

The plan selector replies with:

    Chosen Plan: <number>
    Revised Plan: <revised text>

Section order does not matter; a section's content runs until the next label
or the end of the text. Labels are configuration (``LabelSet``) so prompt
variants can re-word everything else while the parser stays fixed on labels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import ParseError
from .state import Content, Plan, ShortTermMemory


@dataclass(frozen=True)
class LabelSet:
    paragraph: str = "Output Paragraph:"
    memory: str = "Output Memory:"
    plan_prefix: str = "Output Plan"
    chosen: str = "Chosen Plan:"
    revised: str = "Revised Plan:"

    def plan(self, index: int) -> str:
        return f"{self.plan_prefix} {index}:"


DEFAULT_LABELS = LabelSet()


@dataclass(frozen=True)
class ResponseShape:
    """What sections a prompt asks the model to produce.

    Carried on every PromptBundle so repair prompts can restate the format
    and the mock generator knows what to emit. ``selector_of`` > 0 marks a
    plan-selector prompt over that many candidates.
    """

    paragraph: bool = True
    memory: bool = True
    plan_count: int = 3
    selector_of: int = 0


@dataclass(frozen=True)
class StepOutput:
    """Parsed LLM response for one step: new content, memory, candidate plans."""

    content: Content
    short_term: ShortTermMemory
    plans: tuple[Plan, ...] = ()


@dataclass(frozen=True)
class _Section:
    key: str  # "paragraph" | "memory" | "plan" | "chosen" | "revised"
    index: int  # plan number, 0 otherwise
    text: str


def _label_patterns(labels: LabelSet) -> list[tuple[str, re.Pattern]]:
    plan_pat = re.compile(
        rf"^[ \t]*{re.escape(labels.plan_prefix)}[ \t]+(\d+)[ \t]*:",
        re.IGNORECASE | re.MULTILINE)
    simple = []
    for key, label in (("paragraph", labels.paragraph), ("memory", labels.memory),
                       ("chosen", labels.chosen), ("revised", labels.revised)):
        simple.append((key, re.compile(rf"^[ \t]*{re.escape(label)}",
                                       re.IGNORECASE | re.MULTILINE)))
    return simple + [("plan", plan_pat)]


def _scan_sections(raw: str, labels: LabelSet) -> list[_Section]:
    hits: list[tuple[int, int, str, int]] = []  # (start, end_of_label, key, index)
    for key, pattern in _label_patterns(labels):
        for m in pattern.finditer(raw):
            index = int(m.group(1)) if key == "plan" else 0
            hits.append((m.start(), m.end(), key, index))
    hits.sort()
    sections = []
    for i, (start, label_end, key, index) in enumerate(hits):
        end = hits[i + 1][0] if i + 1 < len(hits) else len(raw)
        sections.append(_Section(key, index, raw[label_end:end].strip()))
    return sections


def parse_step_output(raw: str, expected_plans: int, prev_step: int,
                      labels: LabelSet = DEFAULT_LABELS,
                      require_memory: bool = True) -> StepOutput:
    """Extract content, memory and plans from a labeled response.

    Raises ParseError("missing-section") when the paragraph (or the memory,
    if required) is absent or empty, and ParseError("missing-plans") with the
    partial result attached when fewer than ``expected_plans`` plan sections
    were found.
    """
    sections = _scan_sections(raw, labels)

    paragraph = next((s.text for s in sections if s.key == "paragraph" and s.text), None)
    if paragraph is None:
        raise ParseError("missing-section", "no paragraph section in response")
    memory = next((s.text for s in sections if s.key == "memory" and s.text), None)
    if memory is None and require_memory:
        raise ParseError("missing-section", "no memory section in response")

    by_index: dict[int, str] = {}
    for s in sections:
        if s.key == "plan" and s.text and s.index not in by_index:
            by_index[s.index] = s.text
    plans = tuple(Plan(by_index[i], origin="model")
                  for i in sorted(by_index)[:expected_plans])

    content = Content(paragraph, timestep=prev_step + 1)
    short_term = ShortTermMemory(memory) if memory is not None else None
    if short_term is None:
        # memory was optional (user-seeded); the engine discards this
        # placeholder in favor of the user text.
        short_term = ShortTermMemory("(unused)")
    if len(plans) < expected_plans:
        raise ParseError(
            "missing-plans",
            f"expected {expected_plans} plans, found {len(plans)}",
            partial=StepOutput(content, short_term, plans))
    return StepOutput(content, short_term, plans)


def parse_selector_output(raw: str, plans: Sequence[Plan],
                          labels: LabelSet = DEFAULT_LABELS) -> tuple[int, Plan]:
    """Extract the chosen index (1-based) and the revised plan.

    An empty or missing revised text falls back to the chosen plan's original
    wording; selection is the essential signal, revision an enhancement. The
    returned plan always has origin "model".
    """
    n = len(plans)
    if n == 0:
        raise ValueError("selector output needs a non-empty candidate list")
    sections = _scan_sections(raw, labels)
    chosen_text = next((s.text for s in sections if s.key == "chosen"), None)
    if chosen_text is None:
        raise ParseError("bad-selection", "no chosen-plan section in response")
    m = re.search(r"-?\d+", chosen_text)
    if not m:
        raise ParseError("bad-selection", f"no index in {chosen_text!r}")
    index = int(m.group())
    if not 1 <= index <= n:
        raise ParseError("bad-selection", f"chosen index {index} out of [1, {n}]")
    revised = next((s.text for s in sections if s.key == "revised" and s.text), None)
    text = revised if revised else plans[index - 1].text
    return index, Plan(text, origin="model")


def render_step_output(output: StepOutput, labels: LabelSet = DEFAULT_LABELS) -> str:
    """Canonical serialization; parse_step_output inverts it exactly."""
    parts = [labels.paragraph, output.content.text,
             labels.memory, output.short_term.text]
    for i, plan in enumerate(output.plans, start=1):
        parts.extend([labels.plan(i), plan.text])
    return "\n".join(parts)


def render_output_format(shape: ResponseShape, labels: LabelSet = DEFAULT_LABELS,
                         hints: dict[str, str] | None = None) -> str:
    """The response-format skeleton appended to prompts.

    ``hints`` may carry per-section guidance text keyed by "paragraph",
    "memory" and "plan".
    """
    hints = hints or {}
    if shape.selector_of:
        return ("Respond in exactly this format:\n"
                f"{labels.chosen} <the number of the plan you choose, 1-{shape.selector_of}>\n"
                f"{labels.revised} <the chosen plan, revised and improved>")
    lines = ["Respond in exactly this format:"]
    if shape.paragraph:
        lines.append(labels.paragraph)
        lines.append(f"<{hints.get('paragraph', 'the next paragraph of the story')}>")
    if shape.memory:
        lines.append(labels.memory)
        lines.append(f"<{hints.get('memory', 'the rewritten short-term memory')}>")
    for i in range(1, shape.plan_count + 1):
        lines.append(labels.plan(i))
        lines.append(f"<{hints.get('plan', 'a plan for what happens next')}>")
    return "\n".join(lines)
