"""Durable session files, audit retention, and transcript export.

A session lives in one directory:

    <data_dir>/<session_id>/session.json   state + audit, format below
    <data_dir>/<session_id>/memory/        the long-term memory store

session.json (format version 1) is canonical JSON — sorted keys, two-space
indent, raw UTF-8 — so saving the same state twice produces byte-identical
files. The long-term store is referenced by relative path, never inlined (it
can be large). Step wall-clock durations are runtime diagnostics and are not
serialized. No credential ever appears in a session file.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import (
    SessionCorruptError,
    SessionIOError,
    SessionVersionError,
)
from .engine import EditRecord, StepRecord
from .memory import LongTermMemory
from .state import (
    Content,
    Plan,
    SessionMeta,
    SessionState,
    ShortTermMemory,
    ValidationReport,
    Violation,
)
from .wire import StepOutput

SESSION_FORMAT_VERSION = 1

AuditEntry = StepRecord | EditRecord


def session_dir(data_dir: Path, session_id: str) -> Path:
    return Path(data_dir) / session_id


def session_path(data_dir: Path, session_id: str) -> Path:
    return session_dir(data_dir, session_id) / "session.json"


def store_path(data_dir: Path, session_id: str) -> Path:
    return session_dir(data_dir, session_id) / "memory"


# --- serialization helpers ---

def _content_doc(c: Content) -> dict:
    return {"text": c.text, "timestep": c.timestep}


def _content_from(doc: dict) -> Content:
    return Content(doc["text"], timestep=doc["timestep"])


def _plan_doc(p: Plan) -> dict:
    return {"text": p.text, "origin": p.origin}


def _plan_from(doc: dict) -> Plan:
    return Plan(doc["text"], origin=doc["origin"])


def _meta_doc(meta: SessionMeta) -> dict:
    return {
        "title": meta.title, "genre": meta.genre, "background": meta.background,
        "mode": meta.mode, "perspective": meta.perspective,
        "initial_short_term": meta.initial_short_term,
        "initial_plan": meta.initial_plan,
    }


def _meta_from(doc: dict) -> SessionMeta:
    return SessionMeta(
        title=doc["title"], genre=doc["genre"], background=doc["background"],
        mode=doc["mode"], perspective=doc["perspective"],
        initial_short_term=doc.get("initial_short_term"),
        initial_plan=doc.get("initial_plan"),
    )


def _validation_doc(report: ValidationReport) -> list[dict]:
    return [{"field": v.field_name, "kind": v.kind, "observed": v.observed,
             "minimum": v.minimum, "maximum": v.maximum}
            for v in report.violations]


def _validation_from(docs: list[dict]) -> ValidationReport:
    return ValidationReport(tuple(
        Violation(d["field"], d["kind"], d["observed"], d["minimum"], d["maximum"])
        for d in docs))


def _audit_doc(entry: AuditEntry) -> dict:
    if isinstance(entry, StepRecord):
        return {
            "record_type": "step",
            "step": entry.step,
            "chosen_plan": _plan_doc(entry.chosen_plan),
            "consumed_content": _content_doc(entry.consumed_content),
            "consumed_short_term": entry.consumed_short_term.text,
            "retrieved_timesteps": list(entry.retrieved_timesteps),
            "output": {
                "content": _content_doc(entry.output.content),
                "short_term": entry.output.short_term.text,
                "plans": [_plan_doc(p) for p in entry.output.plans],
            },
            "validation": _validation_doc(entry.validation),
            "prompt_tokens": entry.prompt_tokens,
            "repaired": entry.repaired,
        }
    return {
        "record_type": "edit",
        "kind": entry.kind,
        "step": entry.step,
        "index": entry.index,
        "text": entry.text,
    }


def _audit_from(doc: dict) -> AuditEntry:
    if doc["record_type"] == "edit":
        return EditRecord(doc["kind"], doc["step"], doc["text"], index=doc["index"])
    if doc["record_type"] != "step":
        raise SessionCorruptError(f"unknown audit record_type {doc['record_type']!r}")
    out = doc["output"]
    return StepRecord(
        step=doc["step"],
        chosen_plan=_plan_from(doc["chosen_plan"]),
        consumed_content=_content_from(doc["consumed_content"]),
        consumed_short_term=ShortTermMemory(doc["consumed_short_term"]),
        retrieved_timesteps=tuple(doc["retrieved_timesteps"]),
        output=StepOutput(
            _content_from(out["content"]),
            ShortTermMemory(out["short_term"]),
            tuple(_plan_from(p) for p in out["plans"]),
        ),
        validation=_validation_from(doc["validation"]),
        prompt_tokens=doc["prompt_tokens"],
        repaired=doc["repaired"],
        wall_time=0.0,  # not serialized
    )


def _session_doc(state: SessionState, audit: list[AuditEntry], store_ref: str) -> dict:
    return {
        "format_version": SESSION_FORMAT_VERSION,
        "state": {
            "id": state.id,
            "meta": _meta_doc(state.meta),
            "step": state.step,
            "rng_seed": state.rng_seed,
            "short_term": state.short_term.text,
            "transcript": [_content_doc(c) for c in state.transcript],
            "pending_plans": [_plan_doc(p) for p in state.pending_plans],
            "current_plan": (_plan_doc(state.current_plan)
                             if state.current_plan is not None else None),
            "memory_store": store_ref,
        },
        "audit": [_audit_doc(e) for e in audit],
    }


# --- public operations ---

def save_session(state: SessionState, audit: list[AuditEntry], path: Path) -> None:
    """Write the session file atomically; flush the memory store next to it.

    A store not yet on disk is materialized at ``<path dir>/memory``. The
    file appears at ``path`` complete or not at all (temp file + rename).
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if state.long_term.storage_path is None:
            state.long_term.flush_to(path.parent / "memory")
        store_ref = os.path.relpath(state.long_term.storage_path,
                                    path.parent).replace(os.sep, "/")
        doc = _session_doc(state, audit, store_ref)
        body = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        tmp = path.with_name(path.name + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise SessionIOError(f"cannot save session to {path}: {e}") from e


def load_session(path: Path) -> tuple[SessionState, list[AuditEntry]]:
    """Rebuild a session and its audit from disk; invariants re-checked."""
    path = Path(path)
    if not path.is_file():
        raise SessionIOError(f"no session file at {path}")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SessionIOError(f"cannot read {path}: {e}") from e
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SessionCorruptError(f"session file {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SessionCorruptError(f"session file {path} is not a JSON object")
    version = doc.get("format_version")
    if version != SESSION_FORMAT_VERSION:
        raise SessionVersionError(f"unsupported session format_version {version!r}")

    try:
        s = doc["state"]
        store = LongTermMemory.load(path.parent / s["memory_store"])
        transcript = [_content_from(c) for c in s["transcript"]]
        state = SessionState(
            id=s["id"],
            meta=_meta_from(s["meta"]),
            last_content=transcript[-1],
            short_term=ShortTermMemory(s["short_term"]),
            long_term=store,
            transcript=transcript,
            step=s["step"],
            rng_seed=s["rng_seed"],
            pending_plans=[_plan_from(p) for p in s["pending_plans"]],
            current_plan=(_plan_from(s["current_plan"])
                          if s.get("current_plan") is not None else None),
        )
        audit = [_audit_from(e) for e in doc["audit"]]
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise SessionCorruptError(f"session file {path} is malformed: {e}") from e

    try:
        state.validate_invariants()
    except ValueError as e:
        raise SessionCorruptError(f"session file {path} breaks invariants: {e}") from e
    for content, entry in zip(state.transcript, store.entries):
        if content.text != entry.content_text:
            raise SessionCorruptError(
                f"memory store text diverges from transcript at timestep {entry.timestep}")
    return state, audit


def export_transcript(state: SessionState, format: str = "plain") -> str:
    """Concatenate the transcript in timestep order.

    Plain joins contents with blank lines; markdown puts the title on top and
    one heading per timestep.
    """
    if format == "plain":
        return "\n\n".join(c.text for c in state.transcript)
    if format == "markdown":
        parts = [f"# {state.meta.title}"]
        for c in state.transcript:
            parts.append(f"## Timestep {c.timestep}\n\n{c.text}")
        return "\n\n".join(parts)
    raise ValueError(f"unknown export format {format!r}")
