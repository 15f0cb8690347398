"""Chat-completion and embedding backends.

Two kinds: ``http-chat`` talks the chat-completions JSON convention to any
compatible endpoint; ``mock`` is fully offline and deterministic, for tests
and reproducible runs.

Mock embedding rule (tests derive expected vectors from this):
  * take every character trigram of the text (the whole text if shorter
    than 3 characters);
  * for each trigram g, h = sha256("{seed}:" + g) over UTF-8 bytes,
    bucket = first 4 digest bytes as a big-endian integer, modulo d,
    weight = 1 + (next 4 digest bytes as big-endian integer) / 2**32;
  * add the weight to the bucket, then normalize the vector to unit length.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

from .errors import (
    EmptyTextError,
    ProviderResponseError,
    TransportError,
)
from .memory import EmbeddingVector
from .prompts import PromptBundle
from .wire import DEFAULT_LABELS, ResponseShape

logger = logging.getLogger(__name__)

DEFAULT_CREDENTIAL_ENV = "RECURRENT_SCRIBE_API_KEY"
DEFAULT_MOCK_EMBED_DIM = 64

# Sizes the deterministic generator emits, chosen to sit inside the default
# advisory limits so validators stay silent in tests.
MOCK_PARAGRAPH_WORDS = 250
MOCK_MEMORY_SENTENCES = 12
MOCK_PLAN_SENTENCES = 3
_WORDS_PER_SENTENCE = 10


@dataclass(frozen=True)
class ProviderConfig:
    """Identity and parameters of the backbone LLM and embedder."""

    kind: str = "mock"  # "http-chat" | "mock"
    endpoint: str = ""
    model_name: str = "mock-novelist"
    temperature: float = 1.0
    max_response_tokens: int = 1200
    timeout: float = 60.0
    max_retries: int = 3
    retry_base_delay: float = 1.0
    credential_source: str = DEFAULT_CREDENTIAL_ENV
    embed_endpoint: str = ""
    embed_model: str = ""
    embed_dimension: int = DEFAULT_MOCK_EMBED_DIM
    mock_seed: int = 0
    mock_responses: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("http-chat", "mock"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http-chat" and not self.endpoint:
            raise ValueError("http-chat provider needs an endpoint")


class Provider(Protocol):
    embed_dimension: int

    def complete(self, bundle: PromptBundle, *, temperature: float | None = None) -> str: ...

    def embed(self, text: str) -> EmbeddingVector: ...


def make_provider(cfg: ProviderConfig) -> "Provider":
    if cfg.kind == "mock":
        return MockProvider(MockScript(cfg.mock_responses, cfg.mock_seed),
                            embed_dimension=cfg.embed_dimension)
    return HttpChatProvider(cfg)


def hash_embedding(text: str, dimension: int, seed: int = 0) -> EmbeddingVector:
    """The documented trigram-hash embedding used by the mock provider."""
    if not text:
        raise EmptyTextError("cannot embed empty text")
    grams = [text[i:i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
    acc = [0.0] * dimension
    for gram in grams:
        digest = hashlib.sha256(f"{seed}:{gram}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dimension
        weight = 1.0 + int.from_bytes(digest[4:8], "big") / 2**32
        acc[bucket] += weight
    return EmbeddingVector.from_raw(acc)


@dataclass
class MockScript:
    """Canned responses consumed in order, or a seeded generator rule."""

    responses: Sequence[str] | None = None
    seed: int = 0


_VOCABULARY = (
    "the", "old", "lighthouse", "keeper", "watched", "storm", "gather", "over",
    "dark", "water", "lantern", "flickered", "against", "wind", "rain", "while",
    "waves", "broke", "along", "stone", "pier", "she", "remembered", "warning",
    "carved", "into", "door", "every", "night", "brought", "strange", "lights",
    "beneath", "harbor", "nobody", "believed", "her", "until", "ships", "began",
    "returning", "empty", "fog", "rolled", "in", "thick", "salt", "bell", "rang",
    "twice", "then", "fell", "silent", "footsteps", "echoed", "on", "wet",
    "boards", "a", "figure", "stood", "where", "no", "one", "should", "be",
)


class MockProvider:
    """Deterministic offline backend.

    With canned responses it plays them in order; otherwise it generates
    well-formed labeled outputs (250-word paragraphs, 12-sentence memories)
    from a seeded RNG, byte-identical across runs for the same call sequence.
    """

    def __init__(self, script: MockScript | None = None,
                 embed_dimension: int = DEFAULT_MOCK_EMBED_DIM,
                 embed_seed: int | None = None):
        self.script = script or MockScript()
        self.embed_dimension = embed_dimension
        self._embed_seed = self.script.seed if embed_seed is None else embed_seed
        self._rng = random.Random(self.script.seed)
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, bundle: PromptBundle, *, temperature: float | None = None) -> str:
        with self._lock:
            if self.script.responses is not None:
                if self._cursor >= len(self.script.responses):
                    raise TransportError("mock script exhausted")
                response = self.script.responses[self._cursor]
                self._cursor += 1
                return response
            return self._generate(bundle.reply_shape)

    def embed(self, text: str) -> EmbeddingVector:
        return hash_embedding(text, self.embed_dimension, self._embed_seed)

    def _sentence(self, words: int) -> str:
        picked = [self._rng.choice(_VOCABULARY) for _ in range(words)]
        return (" ".join(picked)).capitalize() + "."

    def _passage(self, sentence_count: int) -> str:
        return " ".join(self._sentence(_WORDS_PER_SENTENCE) for _ in range(sentence_count))

    def _generate(self, shape: ResponseShape) -> str:
        labels = DEFAULT_LABELS
        if shape.selector_of:
            index = self._rng.randrange(1, shape.selector_of + 1)
            revised = self._passage(MOCK_PLAN_SENTENCES)
            return f"{labels.chosen} {index}\n{labels.revised} {revised}"
        parts: list[str] = []
        if shape.paragraph:
            parts.extend([labels.paragraph,
                          self._passage(MOCK_PARAGRAPH_WORDS // _WORDS_PER_SENTENCE)])
        if shape.memory:
            parts.extend([labels.memory, self._passage(MOCK_MEMORY_SENTENCES)])
        for i in range(1, shape.plan_count + 1):
            parts.extend([labels.plan(i), self._passage(MOCK_PLAN_SENTENCES)])
        return "\n".join(parts)


class HttpChatProvider:
    """Client for any chat-completions-compatible endpoint.

    Transient failures (timeouts, connection errors, 5xx, 408, 429) are
    retried up to ``max_retries`` times with exponential backoff (base 1s,
    factor 2, full jitter). Client errors are surfaced without retry. The
    credential is read from the configured environment variable and never
    written to logs or error messages.
    """

    _RETRYABLE_STATUS = frozenset({408, 429})

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self.embed_dimension = cfg.embed_dimension

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.credential_source, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_with_retries(self, url: str, payload: dict) -> dict:
        attempts = self.cfg.max_retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                delay = random.uniform(0, self.cfg.retry_base_delay * 2 ** (attempt - 1))
                time.sleep(delay)
            try:
                response = httpx.post(url, json=payload, headers=self._headers(),
                                      timeout=self.cfg.timeout)
            except httpx.TimeoutException as e:
                last_error = f"timeout: {e}"
                logger.warning("provider timeout (attempt %d/%d)", attempt + 1, attempts)
                continue
            except httpx.TransportError as e:
                last_error = f"transport failure: {e}"
                logger.warning("provider transport failure (attempt %d/%d)",
                               attempt + 1, attempts)
                continue
            if response.status_code >= 500 or response.status_code in self._RETRYABLE_STATUS:
                last_error = f"server returned {response.status_code}"
                logger.warning("provider returned %d (attempt %d/%d)",
                               response.status_code, attempt + 1, attempts)
                continue
            if response.status_code >= 400:
                raise ProviderResponseError(
                    f"backend rejected the request with status {response.status_code}")
            try:
                return response.json()
            except json.JSONDecodeError as e:
                raise ProviderResponseError(f"backend returned invalid JSON: {e}") from e
        raise TransportError(f"exhausted {attempts} attempts: {last_error}")

    def complete(self, bundle: PromptBundle, *, temperature: float | None = None) -> str:
        payload = {
            "model": self.cfg.model_name,
            "messages": [{"role": m.role, "content": m.text} for m in bundle.messages],
            "temperature": self.cfg.temperature if temperature is None else temperature,
            "max_tokens": self.cfg.max_response_tokens,
        }
        doc = self._post_with_retries(self.cfg.endpoint, payload)
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderResponseError(f"malformed completion response: {e}") from e

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyTextError("cannot embed empty text")
        if not self.cfg.embed_endpoint:
            raise ProviderResponseError("http-chat provider has no embed_endpoint configured")
        payload = {"model": self.cfg.embed_model or self.cfg.model_name, "input": text}
        doc = self._post_with_retries(self.cfg.embed_endpoint, payload)
        try:
            values = doc["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderResponseError(f"malformed embedding response: {e}") from e
        vector = EmbeddingVector.from_raw(values)
        if vector.dimension != self.cfg.embed_dimension:
            raise ProviderResponseError(
                f"embedder returned d={vector.dimension}, configured d={self.cfg.embed_dimension}")
        return vector
