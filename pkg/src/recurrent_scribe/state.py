"""Natural-language building blocks of the recurrence and the session container.

Word and sentence counting live here because they are the single source of
truth for every length check in the package: words are whitespace tokens,
sentences end at ``.``, ``!`` or ``?`` followed by whitespace or end of text.
Counts are advisory; validators report violations, they never reject.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import InvalidMetaError

if TYPE_CHECKING:
    from .memory import LongTermMemory

MODES = ("writer", "fiction", "autonomous")
PERSPECTIVES = ("third-person", "first-person")
PLAN_ORIGINS = ("model", "human", "human-edited")

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def count_words(text: str) -> int:
    """Number of whitespace-separated tokens in ``text``."""
    return len(text.split())


def split_sentences(text: str) -> list[str]:
    """Split on ``.``/``!``/``?`` followed by whitespace or end of text.

    Abbreviations are not special-cased. A trailing fragment without a
    terminator still counts as a sentence.
    """
    pieces: list[str] = []
    start = 0
    for m in _SENTENCE_END.finditer(text):
        pieces.append(text[start:m.end()])
        start = m.end()
    tail = text[start:]
    if tail.strip():
        pieces.append(tail)
    return [p.strip() for p in pieces if p.strip()]


def count_sentences(text: str) -> int:
    return len(split_sentences(text))


@dataclass(frozen=True)
class Content:
    """One timestep's paragraph(s), appended verbatim to the final text."""

    text: str
    timestep: int
    word_count: int = field(init=False)

    def __post_init__(self):
        if self.timestep < 0:
            raise ValueError(f"timestep must be >= 0, got {self.timestep}")
        object.__setattr__(self, "word_count", count_words(self.text))


@dataclass(frozen=True)
class Plan:
    """A short outline for the next paragraph; input of the next step."""

    text: str
    origin: str = "model"
    sentence_count: int = field(init=False)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("plan text must be non-empty")
        if self.origin not in PLAN_ORIGINS:
            raise ValueError(f"unknown plan origin {self.origin!r}")
        object.__setattr__(self, "sentence_count", count_sentences(self.text))


@dataclass(frozen=True)
class ShortTermMemory:
    """Rolling summary of recent timesteps, rewritten by the LLM each step."""

    text: str
    sentence_count: int = field(init=False)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("short-term memory text must be non-empty")
        object.__setattr__(self, "sentence_count", count_sentences(self.text))


@dataclass(frozen=True)
class SessionMeta:
    """Who/what the session is about and how it is driven.

    ``initial_short_term`` and ``initial_plan`` let a user seed those
    components by hand; initialization then only generates what is missing.
    """

    title: str
    genre: str
    background: str
    mode: str = "writer"
    perspective: str = ""
    initial_short_term: str | None = None
    initial_plan: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidMetaError(f"unknown mode {self.mode!r}")
        if not self.perspective:
            default = "first-person" if self.mode == "fiction" else "third-person"
            object.__setattr__(self, "perspective", default)
        if self.perspective not in PERSPECTIVES:
            raise InvalidMetaError(f"unknown perspective {self.perspective!r}")
        if self.mode == "fiction" and self.perspective != "first-person":
            raise InvalidMetaError("fiction mode requires first-person perspective")
        if self.mode == "writer" and self.perspective != "third-person":
            raise InvalidMetaError("writer mode requires third-person perspective")


@dataclass(frozen=True)
class LengthLimits:
    """Advisory [minimum, maximum] bounds for a count."""

    minimum: int
    maximum: int

    def __post_init__(self):
        if self.minimum < 0 or self.maximum < self.minimum:
            raise ValueError(f"invalid limits [{self.minimum}, {self.maximum}]")


@dataclass(frozen=True)
class Violation:
    field_name: str
    kind: str  # "below-minimum" | "above-maximum"
    observed: int
    minimum: int
    maximum: int


@dataclass(frozen=True)
class ValidationReport:
    """Zero or more soft violations; never a rejection."""

    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def merged_with(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.violations + other.violations)


def _check_range(field_name: str, observed: int, limits: LengthLimits) -> ValidationReport:
    if observed < limits.minimum:
        return ValidationReport((Violation(field_name, "below-minimum", observed,
                                           limits.minimum, limits.maximum),))
    if observed > limits.maximum:
        return ValidationReport((Violation(field_name, "above-maximum", observed,
                                           limits.minimum, limits.maximum),))
    return ValidationReport()


def validate_content(c: Content, limits: LengthLimits) -> ValidationReport:
    """Flag word counts outside ``limits``; report-only."""
    return _check_range("content.words", c.word_count, limits)


def validate_short_term(m: ShortTermMemory, limits: LengthLimits) -> ValidationReport:
    """Flag sentence counts outside ``limits``; report-only."""
    return _check_range("short_term.sentences", m.sentence_count, limits)


def validate_plan(p: Plan, limits: LengthLimits, field_name: str = "plan.sentences") -> ValidationReport:
    """Flag plan sentence counts outside ``limits``; report-only."""
    return _check_range(field_name, p.sentence_count, limits)


@dataclass
class SessionState:
    """Complete recurrent state at the current timestep.

    Mutated only by the recurrence engine under the per-session exclusivity
    contract; all contained value types are immutable.
    """

    id: str
    meta: SessionMeta
    last_content: Content
    short_term: ShortTermMemory
    long_term: "LongTermMemory"
    transcript: list[Content]
    step: int
    rng_seed: int
    pending_plans: list[Plan]
    current_plan: Plan | None = None

    def validate_invariants(self) -> None:
        """Raise ValueError if the recurrence-shape invariants are broken."""
        if len(self.transcript) != self.step + 1:
            raise ValueError(
                f"transcript length {len(self.transcript)} != step+1 ({self.step + 1})")
        if len(self.long_term) != len(self.transcript):
            raise ValueError(
                f"memory size {len(self.long_term)} != transcript length {len(self.transcript)}")
        for i, c in enumerate(self.transcript):
            if c.timestep != i:
                raise ValueError(f"transcript[{i}] has timestep {c.timestep}")
        if self.last_content is not self.transcript[-1] and \
                self.last_content != self.transcript[-1]:
            raise ValueError("last_content is not the newest transcript entry")
