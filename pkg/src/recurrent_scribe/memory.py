"""Append-only long-term memory with cosine top-k retrieval and disk write-through.

On-disk layout (format version 1), one directory per store:

    manifest.json   {"format_version": 1, "dimension": d, "entry_count": n}
    records.jsonl   one JSON object per line:
                    {"timestep": t, "content_text": "...", "vector": [...]}

The manifest's ``entry_count`` is authoritative: lines past it are debris
from an interrupted append and are ignored on load. Appends write the record
line first, then replace the manifest atomically; any failure rolls the store
back to its previous state in memory and on disk.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DimensionMismatchError,
    MemoryStoreMissingError,
    StoreCorruptError,
    StoreIOError,
    StoreVersionError,
    TimestepError,
    ZeroVectorError,
)
from .state import Content

STORE_FORMAT_VERSION = 1
_UNIT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbeddingVector:
    """A unit-normalized embedding. Construct raw values via ``from_raw``."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ZeroVectorError("embedding vector must have at least one component")
        norm = math.sqrt(sum(v * v for v in self.values))
        if abs(norm - 1.0) > _UNIT_TOLERANCE:
            raise ZeroVectorError(
                f"vector is not unit-normalized (norm={norm!r}); use EmbeddingVector.from_raw")

    @classmethod
    def from_raw(cls, values: Iterable[float]) -> "EmbeddingVector":
        vals = tuple(float(v) for v in values)
        norm = math.sqrt(sum(v * v for v in vals))
        if norm < 1e-12:
            raise ZeroVectorError("cannot normalize a zero vector")
        return cls(tuple(v / norm for v in vals))

    @property
    def dimension(self) -> int:
        return len(self.values)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1]."""
    if a.dimension != b.dimension:
        raise DimensionMismatchError(
            f"cosine between d={a.dimension} and d={b.dimension}")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot))


@dataclass(frozen=True)
class MemoryEntry:
    """One timestep's content plus its embedding."""

    timestep: int
    content_text: str
    embedding: EmbeddingVector


class LongTermMemory:
    """Ordered, append-only store of embedded contents.

    When ``storage_path`` is set every append is written through to disk, so
    the directory always mirrors the in-memory entries.
    """

    def __init__(self, dimension: int, storage_path: Path | None = None,
                 _entries: list[MemoryEntry] | None = None):
        if dimension <= 0:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.storage_path = Path(storage_path) if storage_path is not None else None
        self._entries: list[MemoryEntry] = _entries or []
        # Authoritative byte length of records.jsonl; anything beyond it is
        # debris from an interrupted append and gets truncated before writes.
        self._records_size = sum(len(self._record_line(e).encode("utf-8"))
                                 for e in self._entries)

    # --- construction / loading ---

    @classmethod
    def create(cls, dimension: int, storage_path: Path | None = None) -> "LongTermMemory":
        store = cls(dimension, storage_path)
        if store.storage_path is not None:
            try:
                store.storage_path.mkdir(parents=True, exist_ok=True)
                (store.storage_path / "records.jsonl").touch()
                store._write_manifest(0)
            except OSError as e:
                raise StoreIOError(f"cannot initialize store at {store.storage_path}: {e}") from e
        return store

    @classmethod
    def load(cls, storage_path: Path) -> "LongTermMemory":
        storage_path = Path(storage_path)
        manifest_file = storage_path / "manifest.json"
        records_file = storage_path / "records.jsonl"
        if not manifest_file.is_file() or not records_file.is_file():
            raise MemoryStoreMissingError(f"no memory store at {storage_path}")
        try:
            manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise StoreCorruptError(f"unreadable manifest in {storage_path}: {e}") from e
        version = manifest.get("format_version")
        if version != STORE_FORMAT_VERSION:
            raise StoreVersionError(f"unsupported store format_version {version!r}")
        dimension = manifest.get("dimension")
        count = manifest.get("entry_count")
        if not isinstance(dimension, int) or not isinstance(count, int) or count < 0:
            raise StoreCorruptError(f"malformed manifest in {storage_path}")

        entries: list[MemoryEntry] = []
        try:
            with records_file.open(encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i >= count:
                        break  # debris from an interrupted append
                    rec = json.loads(line)
                    vec = EmbeddingVector(tuple(float(v) for v in rec["vector"]))
                    if vec.dimension != dimension:
                        raise StoreCorruptError(
                            f"record {i} has dimension {vec.dimension}, expected {dimension}")
                    if rec["timestep"] != i:
                        raise StoreCorruptError(
                            f"record {i} has timestep {rec['timestep']}")
                    entries.append(MemoryEntry(i, rec["content_text"], vec))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise StoreCorruptError(f"unreadable records in {storage_path}: {e}") from e
        if len(entries) < count:
            raise StoreCorruptError(
                f"manifest promises {count} entries, records hold {len(entries)}")
        return cls(dimension, storage_path, entries)

    # --- views ---

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    # --- mutation ---

    def append(self, content: Content, embedding: EmbeddingVector) -> None:
        """Append one entry; write-through to disk when configured.

        ``content.timestep`` must equal the current entry count. On any disk
        failure the in-memory state is untouched and the partial record line
        is truncated away.
        """
        if embedding.dimension != self.dimension:
            raise DimensionMismatchError(
                f"append of d={embedding.dimension} into store of d={self.dimension}")
        expected = len(self._entries)
        if content.timestep != expected:
            kind = "duplicate" if content.timestep < expected else "gap"
            raise TimestepError(
                f"append with timestep {content.timestep} into store of size {expected} ({kind})")
        entry = MemoryEntry(content.timestep, content.text, embedding)
        if self.storage_path is not None:
            self._persist_append(entry)
        self._entries.append(entry)

    def replace_last(self, content_text: str, embedding: EmbeddingVector) -> None:
        """Overwrite the newest entry's text and vector.

        The one permitted overwrite, backing human edits of the latest
        content; rewrites the records file when persistent.
        """
        if not self._entries:
            raise TimestepError("cannot replace the last entry of an empty store")
        if embedding.dimension != self.dimension:
            raise DimensionMismatchError(
                f"replace with d={embedding.dimension} in store of d={self.dimension}")
        old = self._entries[-1]
        self._entries[-1] = MemoryEntry(old.timestep, content_text, embedding)
        if self.storage_path is not None:
            try:
                self._rewrite_all()
            except OSError as e:
                self._entries[-1] = old
                raise StoreIOError(f"replace_last write failed: {e}") from e

    def flush_to(self, storage_path: Path) -> None:
        """Materialize the whole store at ``storage_path`` and attach to it."""
        storage_path = Path(storage_path)
        old_path = self.storage_path
        self.storage_path = storage_path
        try:
            storage_path.mkdir(parents=True, exist_ok=True)
            self._rewrite_all()
        except OSError as e:
            self.storage_path = old_path
            raise StoreIOError(f"cannot flush store to {storage_path}: {e}") from e

    # --- retrieval ---

    def retrieve_scored(self, query: EmbeddingVector, k: int,
                        exclude_timesteps: Sequence[int] = ()) -> list[tuple[MemoryEntry, float]]:
        """Top-k entries by cosine similarity, with their scores.

        Exact linear scan; descending similarity, ties broken by smaller
        timestep. Pure: the store is never mutated.
        """
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        if query.dimension != self.dimension:
            raise DimensionMismatchError(
                f"query of d={query.dimension} against store of d={self.dimension}")
        excluded = set(exclude_timesteps)
        scored = [(e, cosine_similarity(query, e.embedding))
                  for e in self._entries if e.timestep not in excluded]
        scored.sort(key=lambda pair: (-pair[1], pair[0].timestep))
        return scored[:k]

    def retrieve(self, query: EmbeddingVector, k: int,
                 exclude_timesteps: Sequence[int] = ()) -> list[MemoryEntry]:
        """Top-k entries by cosine similarity to ``query``."""
        return [e for e, _ in self.retrieve_scored(query, k, exclude_timesteps)]

    # --- disk protocol ---

    def _manifest_doc(self, count: int) -> str:
        doc = {"format_version": STORE_FORMAT_VERSION,
               "dimension": self.dimension,
               "entry_count": count}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def _write_manifest(self, count: int) -> None:
        assert self.storage_path is not None
        target = self.storage_path / "manifest.json"
        tmp = self.storage_path / "manifest.json.tmp"
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(self._manifest_doc(count))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)

    @staticmethod
    def _record_line(entry: MemoryEntry) -> str:
        doc = {"timestep": entry.timestep,
               "content_text": entry.content_text,
               "vector": list(entry.embedding.values)}
        return json.dumps(doc, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":")) + "\n"

    def _persist_append(self, entry: MemoryEntry) -> None:
        assert self.storage_path is not None
        records = self.storage_path / "records.jsonl"
        line = self._record_line(entry).encode("utf-8")
        try:
            with records.open("r+b") as fh:
                fh.truncate(self._records_size)
                fh.seek(self._records_size)
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as e:
            raise StoreIOError(f"record append failed: {e}") from e
        try:
            self._write_manifest(len(self._entries) + 1)
        except OSError as e:
            try:
                os.truncate(records, self._records_size)
            except OSError:
                pass  # load ignores lines beyond the manifest count anyway
            raise StoreIOError(f"manifest update failed: {e}") from e
        self._records_size += len(line)

    def _rewrite_all(self) -> None:
        assert self.storage_path is not None
        records = self.storage_path / "records.jsonl"
        tmp = self.storage_path / "records.jsonl.tmp"
        size = 0
        with tmp.open("w", encoding="utf-8") as fh:
            for entry in self._entries:
                line = self._record_line(entry)
                fh.write(line)
                size += len(line.encode("utf-8"))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, records)
        self._write_manifest(len(self._entries))
        self._records_size = size
