"""Tunable knobs shared by the prompt engine, recurrence engine and service."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .state import LengthLimits
from .wire import DEFAULT_LABELS, LabelSet

# Defaults: content 200-400 words, memory 10-20 sentences, plan 3-5 sentences,
# 3 candidate plans, 3 retrieved excerpts, 3000-token prompt budget (chars/4
# estimate, leaving response headroom in a 4k-context backbone).
DEFAULT_CONTENT_WORDS = LengthLimits(200, 400)
DEFAULT_MEMORY_SENTENCES = LengthLimits(10, 20)
DEFAULT_PLAN_SENTENCES = LengthLimits(3, 5)
DEFAULT_PLAN_COUNT = 3
DEFAULT_RETRIEVAL_K = 3
DEFAULT_CONTEXT_BUDGET = 3000


@dataclass(frozen=True)
class EngineSettings:
    plan_count: int = DEFAULT_PLAN_COUNT
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    content_words: LengthLimits = DEFAULT_CONTENT_WORDS
    memory_sentences: LengthLimits = DEFAULT_MEMORY_SENTENCES
    plan_sentences: LengthLimits = DEFAULT_PLAN_SENTENCES
    selector_temperature: float = 0.3
    labels: LabelSet = field(default_factory=lambda: DEFAULT_LABELS)
    template_dir: Path | None = None

    def with_overrides(self, **kwargs) -> "EngineSettings":
        """A copy with the given fields replaced; unknown names raise."""
        return replace(self, **kwargs)
