"""The per-step recurrent update, session initialization, autonomous loop, and edits.

A step consumes (previous content, chosen plan, short-term memory, retrieved
long-term memory) and produces (new content, candidate plans, rewritten
short-term memory, one more long-term entry). All six state mutations commit
together after a successful parse; any failure before that leaves the session
exactly as it was.

Per-session exclusivity is enforced here through a process-wide lock
registry: at most one mutating operation per session id at a time, concurrent
mutation attempts fail fast with StepInFlightError. Reads that need a
consistent snapshot can hold the same session's view lock, which mutators
take only around the brief in-memory commit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

from .config import EngineSettings
from .errors import (
    InitError,
    InvalidEditError,
    InvalidPlanError,
    ParseError,
    ScribeError,
    StepError,
    StepInFlightError,
)
from .memory import LongTermMemory
from .prompts import (
    PromptBundle,
    build_generation_prompt,
    build_init_prompt,
    build_selector_prompt,
    enforce_budget,
    repair_bundle,
)
from .providers import Provider
from .state import (
    Content,
    Plan,
    SessionMeta,
    SessionState,
    ShortTermMemory,
    ValidationReport,
    validate_content,
    validate_plan,
    validate_short_term,
)
from .wire import StepOutput, parse_selector_output, parse_step_output

logger = logging.getLogger(__name__)


# --- per-session exclusivity registry ---

class _SessionLocks:
    def __init__(self):
        self.slot = threading.Lock()   # one mutating operation at a time
        self.view = threading.Lock()   # guards the brief in-memory commit


_registry: dict[str, _SessionLocks] = {}
_registry_guard = threading.Lock()


def _locks_for(session_id: str) -> _SessionLocks:
    with _registry_guard:
        return _registry.setdefault(session_id, _SessionLocks())


@contextmanager
def exclusive(session_id: str):
    """Claim the session's single mutation slot or fail fast."""
    locks = _locks_for(session_id)
    if not locks.slot.acquire(blocking=False):
        raise StepInFlightError(f"a step is already in flight for session {session_id}")
    try:
        yield
    finally:
        locks.slot.release()


@contextmanager
def consistent_view(session_id: str):
    """Hold off in-memory commits while reading the session state."""
    locks = _locks_for(session_id)
    with locks.view:
        yield


# --- audit records ---

@dataclass(frozen=True)
class StepRecord:
    """Audit entry for one committed step: everything consumed and produced."""

    step: int                       # the new step index (t+1)
    chosen_plan: Plan               # x_t, origin preserved
    consumed_content: Content       # o_t
    consumed_short_term: ShortTermMemory  # h_t
    retrieved_timesteps: tuple[int, ...]  # the c_t entries shown in the prompt
    output: StepOutput              # o_{t+1}, h_{t+1}, candidate plans
    validation: ValidationReport
    prompt_tokens: int              # post-budget estimate of the assembled prompt
    repaired: bool                  # True when the format-repair retry was needed
    wall_time: float                # seconds; excluded from canonical serialization


@dataclass(frozen=True)
class EditRecord:
    """Audit entry for a human edit applied between steps."""

    kind: str  # "replace_short_term" | "replace_plan" | "replace_last_content"
    step: int  # session step at which the edit was applied
    text: str
    index: int | None = None


@dataclass(frozen=True)
class RunReport:
    """Outcome of an autonomous run; partial progress is never discarded."""

    requested: int
    completed: int
    records: tuple[StepRecord, ...]
    failed_step: int | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_step is None


# --- edit commands ---

@dataclass(frozen=True)
class ReplaceShortTerm:
    text: str


@dataclass(frozen=True)
class ReplacePlan:
    index: int  # 0-based into pending_plans
    text: str


@dataclass(frozen=True)
class ReplaceLastContent:
    text: str


Edit = Union[ReplaceShortTerm, ReplacePlan, ReplaceLastContent]


def derive_session_id(meta: SessionMeta, seed: int) -> str:
    """Deterministic id so identical (meta, seed) runs replay byte-identically."""
    doc = {
        "title": meta.title, "genre": meta.genre, "background": meta.background,
        "mode": meta.mode, "perspective": meta.perspective,
        "initial_short_term": meta.initial_short_term,
        "initial_plan": meta.initial_plan, "seed": seed,
    }
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
    return f"s{digest[:16]}"


class RecurrenceEngine:
    """Drives a session against one provider with fixed settings."""

    def __init__(self, provider: Provider, settings: EngineSettings | None = None):
        self.provider = provider
        self.settings = settings or EngineSettings()

    # --- initialization ---

    def init_session(self, meta: SessionMeta, seed: int,
                     store_dir: Path | None = None,
                     session_id: str | None = None) -> SessionState:
        """Generate timestep 0 and assemble the starting state.

        Components the user supplied in ``meta`` (initial short-term memory,
        initial plan) are not asked for again; only the missing ones are
        generated. Nothing is written to ``store_dir`` until the opening
        content exists, so a failed provider call leaves no files behind.
        """
        bundle = build_init_prompt(meta, self.settings)
        try:
            output, repaired = self._complete_parsed(
                bundle,
                expected_plans=bundle.reply_shape.plan_count,
                prev_step=-1,
                require_memory=bundle.reply_shape.memory,
            )
        except ParseError as e:
            raise InitError(f"opening response unparseable after repair retry: {e}") from e
        if repaired:
            logger.warning("opening response needed a format-repair retry")

        short_term = (ShortTermMemory(meta.initial_short_term)
                      if meta.initial_short_term is not None else output.short_term)
        if meta.initial_plan is not None:
            pending = [Plan(meta.initial_plan, origin="human")]
        else:
            pending = list(output.plans)

        embedding = self.provider.embed(output.content.text)
        store = LongTermMemory.create(self.provider.embed_dimension, store_dir)
        store.append(output.content, embedding)

        state = SessionState(
            id=session_id or derive_session_id(meta, seed),
            meta=meta,
            last_content=output.content,
            short_term=short_term,
            long_term=store,
            transcript=[output.content],
            step=0,
            rng_seed=seed,
            pending_plans=pending,
        )
        state.validate_invariants()
        report = validate_content(output.content, self.settings.content_words)
        report = report.merged_with(
            validate_short_term(short_term, self.settings.memory_sentences))
        self._log_warnings(state.id, report)
        return state

    # --- the recurrent update ---

    def step(self, state: SessionState, chosen: Plan,
             on_record: Callable[[SessionState, StepRecord], None] | None = None,
             ) -> tuple[SessionState, StepRecord]:
        """One recurrent update; claims the session's mutation slot.

        ``on_record`` runs inside the slot, so callers that persist the audit
        there observe records in commit order.
        """
        with exclusive(state.id):
            state, record = self._step_locked(state, chosen)
            if on_record is not None:
                on_record(state, record)
            return state, record

    def _step_locked(self, state: SessionState, chosen: Plan) -> tuple[SessionState, StepRecord]:
        started = time.monotonic()
        if chosen.origin == "model" and not state.pending_plans:
            raise InvalidPlanError("no pending plans to step with")

        query = self.provider.embed(chosen.text)
        # The newest entry is excluded: it is already in the prompt verbatim
        # as the previous content.
        scored = state.long_term.retrieve_scored(
            query, self.settings.retrieval_k, exclude_timesteps=(state.step,))
        bundle = build_generation_prompt(state, scored, chosen, self.settings)
        bundle = enforce_budget(bundle, self.settings.context_budget)
        try:
            output, repaired = self._complete_parsed(
                bundle, expected_plans=self.settings.plan_count, prev_step=state.step)
        except ParseError as e:
            raise StepError(f"step response unparseable after repair retry: {e}") from e
        validation = self._validate_output(output)
        embedding = self.provider.embed(output.content.text)

        consumed_content = state.last_content
        consumed_short_term = state.short_term
        with consistent_view(state.id):
            # Disk first: if the write-through fails the in-memory state is
            # untouched and the store rolls itself back.
            state.long_term.append(output.content, embedding)
            state.transcript.append(output.content)
            state.last_content = output.content
            state.short_term = output.short_term
            state.step += 1
            state.pending_plans = list(output.plans)
            state.current_plan = chosen
        state.validate_invariants()

        record = StepRecord(
            step=state.step,
            chosen_plan=chosen,
            consumed_content=consumed_content,
            consumed_short_term=consumed_short_term,
            retrieved_timesteps=tuple(e.timestep for e, _ in scored),
            output=output,
            validation=validation,
            prompt_tokens=bundle.token_estimate,
            repaired=repaired,
            wall_time=time.monotonic() - started,
        )
        self._log_warnings(state.id, validation)
        return state, record

    # --- the human simulator ---

    def select_plan_auto(self, state: SessionState) -> Plan:
        """Pick and revise one pending plan with the model.

        A single pending plan is returned as-is without a provider call. A
        malformed selector reply falls back to a uniform choice from an RNG
        seeded with "{rng_seed}:{step}", so the pick is reproducible.
        """
        plans = list(state.pending_plans)
        if not plans:
            raise InvalidPlanError("no pending plans to select from")
        if len(plans) == 1:
            return plans[0]
        bundle = build_selector_prompt(state, plans, self.settings)
        raw = self.provider.complete(
            bundle, temperature=self.settings.selector_temperature)
        try:
            _, revised = parse_selector_output(raw, plans, self.settings.labels)
            return revised
        except ParseError as e:
            rng = random.Random(f"{state.rng_seed}:{state.step}")
            index = rng.randrange(len(plans))
            logger.warning("selector reply unusable (%s); falling back to plan %d",
                           e, index + 1)
            return plans[index]

    def run_autonomous(self, state: SessionState, n_steps: int,
                       on_record: Callable[[SessionState, StepRecord], None] | None = None,
                       ) -> tuple[SessionState, RunReport]:
        """Loop select → step ``n_steps`` times, keeping partial progress.

        ``on_record`` observes each committed step in order (the service uses
        it to persist after every step). The first unrecoverable error stops
        the run; the report names the step that failed.
        """
        if n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {n_steps}")
        records: list[StepRecord] = []
        with exclusive(state.id):
            for i in range(n_steps):
                try:
                    plan = self.select_plan_auto(state)
                    state, record = self._step_locked(state, plan)
                except ScribeError as e:
                    logger.warning("autonomous run stopped at step %d: %s",
                                   state.step + 1, e)
                    return state, RunReport(
                        requested=n_steps, completed=i, records=tuple(records),
                        failed_step=state.step + 1, error=str(e))
                records.append(record)
                if on_record is not None:
                    on_record(state, record)
        return state, RunReport(requested=n_steps, completed=n_steps,
                                records=tuple(records))

    # --- human edits ---

    def apply_edit(self, state: SessionState, edit: Edit,
                   on_record: Callable[[SessionState, EditRecord], None] | None = None,
                   ) -> tuple[SessionState, EditRecord]:
        """Replace one building block between steps."""
        with exclusive(state.id):
            state, record = self._apply_edit_locked(state, edit)
            if on_record is not None:
                on_record(state, record)
            return state, record

    def _apply_edit_locked(self, state: SessionState, edit: Edit) -> tuple[SessionState, EditRecord]:
        if isinstance(edit, ReplaceShortTerm):
            replacement = self._wrap_invalid(ShortTermMemory, edit.text)
            with consistent_view(state.id):
                state.short_term = replacement
            record = EditRecord("replace_short_term", state.step, edit.text)
        elif isinstance(edit, ReplacePlan):
            if not 0 <= edit.index < len(state.pending_plans):
                raise InvalidEditError(
                    f"plan index {edit.index} out of range "
                    f"[0, {len(state.pending_plans) - 1}]")
            replacement = self._wrap_invalid(
                lambda t: Plan(t, origin="human-edited"), edit.text)
            with consistent_view(state.id):
                state.pending_plans[edit.index] = replacement
            record = EditRecord("replace_plan", state.step, edit.text, index=edit.index)
        elif isinstance(edit, ReplaceLastContent):
            if not edit.text.strip():
                raise InvalidEditError("replacement content must be non-empty")
            content = Content(edit.text, timestep=state.step)
            embedding = self.provider.embed(edit.text)
            with consistent_view(state.id):
                # The one permitted overwrite of long-term memory: the text
                # changed, so its stored vector must change with it.
                state.long_term.replace_last(edit.text, embedding)
                state.transcript[-1] = content
                state.last_content = content
            record = EditRecord("replace_last_content", state.step, edit.text)
        else:
            raise InvalidEditError(f"unknown edit {edit!r}")
        state.validate_invariants()
        return state, record

    # --- internals ---

    @staticmethod
    def _wrap_invalid(factory, text: str):
        try:
            return factory(text)
        except ValueError as e:
            raise InvalidEditError(str(e)) from e

    def _complete_parsed(self, bundle: PromptBundle, expected_plans: int,
                         prev_step: int, require_memory: bool = True,
                         ) -> tuple[StepOutput, bool]:
        """complete → parse, with one format-restating retry on parse failure."""
        raw = self.provider.complete(bundle)
        try:
            output = parse_step_output(raw, expected_plans, prev_step,
                                       self.settings.labels, require_memory)
            return output, False
        except ParseError as first:
            logger.warning("response parse failed (%s); retrying with the "
                           "format restated", first.kind)
            retry_raw = self.provider.complete(repair_bundle(bundle, self.settings))
            output = parse_step_output(retry_raw, expected_plans, prev_step,
                                       self.settings.labels, require_memory)
            return output, True

    def _validate_output(self, output: StepOutput) -> ValidationReport:
        report = validate_content(output.content, self.settings.content_words)
        report = report.merged_with(
            validate_short_term(output.short_term, self.settings.memory_sentences))
        for i, plan in enumerate(output.plans, start=1):
            report = report.merged_with(
                validate_plan(plan, self.settings.plan_sentences,
                              field_name=f"plan[{i}].sentences"))
        return report

    @staticmethod
    def _log_warnings(session_id: str, report: ValidationReport) -> None:
        for v in report.violations:
            logger.warning("session %s: %s %s (%d outside [%d, %d])",
                           session_id, v.field_name, v.kind, v.observed,
                           v.minimum, v.maximum)
