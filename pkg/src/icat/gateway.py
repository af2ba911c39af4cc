"""Uniform client layer for the four model roles: chat completion, text
embedding, NLI, and web search.

Each role gateway wraps a transport backend (HTTP or an in-process mock)
with the shared policy: bounded retries with exponential backoff on
transient failures, an in-flight request limit, a content-hash response
cache, and input truncation for the length-sensitive roles (embedding and
NLI only; chat prompts pass through untouched since they legitimately
embed whole responses).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

ROLES = ("chat", "embedding", "nli", "websearch")
NLI_LABELS = ("entailment", "neutral", "contradiction")

DEFAULT_TRUNCATE_CHARS = 2000


class GatewayError(RuntimeError):
    """Base error for backend/gateway failures."""


class TransientBackendError(GatewayError):
    """Retryable failure: connection trouble, 5xx, or throttling."""


class BackendError(GatewayError):
    """Terminal failure: the backend answered and the answer is unusable."""


class RetryExhaustedError(GatewayError):
    """All retry attempts failed."""


@dataclass
class BackendConfig:
    role: str
    endpoint: str = ""
    model_id: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    max_in_flight: int = 4
    retry_backoff_s: float = 0.5
    truncate_chars: int = DEFAULT_TRUNCATE_CHARS
    batch_size: int = 64
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown backend role {self.role!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def api_key(self) -> str | None:
        if self.api_key_env:
            return os.environ.get(self.api_key_env)
        return None


@dataclass(frozen=True)
class NliVerdict:
    label: str
    probabilities: tuple[float, float, float]  # (entailment, neutral, contradiction)

    def __post_init__(self) -> None:
        if self.label not in NLI_LABELS:
            raise ValueError(f"unknown NLI label {self.label!r}")
        if any(p < 0 for p in self.probabilities):
            raise ValueError("NLI probabilities must be non-negative")
        if abs(sum(self.probabilities) - 1.0) > 1e-6:
            raise ValueError(f"NLI probabilities must sum to 1, got {self.probabilities}")
        if self.label != NLI_LABELS[int(np.argmax(self.probabilities))]:
            raise ValueError("label must be the argmax of the probabilities")

    @property
    def entail_probability(self) -> float:
        return self.probabilities[0]


class ResponseCache:
    """One file per content hash; values are deterministic, so concurrent
    writers racing on the same key are benign (last writer wins)."""

    def __init__(self, directory: str | Path | None, enabled: bool = True):
        self.directory = Path(directory) if directory else None
        self.enabled = enabled and self.directory is not None
        if self.enabled:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str):
        if not self.enabled:
            return None
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))["value"]
        except (OSError, json.JSONDecodeError, KeyError):
            return None

    def put(self, key: str, value, model_id: str = "") -> None:
        if not self.enabled:
            return
        payload = json.dumps(
            {"value": value, "model_id": model_id, "timestamp": time.time()},
            ensure_ascii=False,
        )
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp, self._path(key))
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def cache_key(*parts: str) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


class _RoleGateway:
    def __init__(self, config: BackendConfig, backend, cache: ResponseCache | None = None):
        self.config = config
        self.backend = backend
        self.cache = cache or ResponseCache(None)
        self._semaphore = threading.Semaphore(config.max_in_flight)

    def _call(self, fn):
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            try:
                with self._semaphore:
                    return fn()
            except TransientBackendError as exc:
                last = exc
                logger.warning(
                    "%s backend transient failure (attempt %d/%d): %s",
                    self.config.role, attempt + 1, attempts, exc,
                )
                if attempt + 1 < attempts and self.config.retry_backoff_s > 0:
                    time.sleep(self.config.retry_backoff_s * (2 ** attempt))
        raise RetryExhaustedError(
            f"{self.config.role} backend failed after {attempts} attempts: {last}"
        ) from last

    def _truncate(self, text: str) -> str:
        budget = self.config.truncate_chars
        if budget and len(text) > budget:
            logger.warning(
                "%s input truncated from %d to %d chars", self.config.role, len(text), budget
            )
            return text[:budget]
        return text


class ChatGateway(_RoleGateway):
    def chat(self, prompt: str) -> str:
        key = cache_key("chat", self.config.model_id, prompt)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        completion = self._call(lambda: self.backend.complete(prompt, self.config.temperature))
        if not isinstance(completion, str) or not completion.strip():
            raise BackendError("chat backend returned an empty completion")
        self.cache.put(key, completion, self.config.model_id)
        return completion


class EmbeddingGateway(_RoleGateway):
    def embed(self, texts: list[str]) -> list[np.ndarray]:
        """One unit vector per input text; batching and caching are per text."""
        if not texts:
            raise BackendError("embed requires a non-empty list of texts")
        if any(not t for t in texts):
            raise BackendError("embed requires non-empty texts")
        truncated = [self._truncate(t) for t in texts]
        keys = [cache_key("embedding", self.config.model_id, t) for t in truncated]
        raw: list[list[float] | None] = [self.cache.get(k) for k in keys]
        missing = [i for i, v in enumerate(raw) if v is None]
        for start in range(0, len(missing), self.config.batch_size):
            batch_idx = missing[start : start + self.config.batch_size]
            batch = [truncated[i] for i in batch_idx]
            vectors = self._call(lambda b=batch: self.backend.embed(b))
            if len(vectors) != len(batch):
                raise BackendError(
                    f"embedding backend returned {len(vectors)} vectors for {len(batch)} texts"
                )
            for i, vec in zip(batch_idx, vectors):
                raw[i] = [float(x) for x in vec]
                self.cache.put(keys[i], raw[i], self.config.model_id)
        dims = {len(v) for v in raw}
        if len(dims) != 1:
            raise BackendError(f"inconsistent embedding dimensions from backend: {sorted(dims)}")
        out: list[np.ndarray] = []
        for vec in raw:
            arr = np.asarray(vec, dtype=np.float64)
            norm = float(np.linalg.norm(arr))
            if norm == 0.0:
                raise BackendError("embedding backend returned a zero vector")
            out.append((arr / norm).astype(np.float32))
        return out


class NliGateway(_RoleGateway):
    def nli(self, premise: str, hypothesis: str) -> NliVerdict:
        if not premise or not hypothesis:
            raise BackendError("nli requires non-empty premise and hypothesis")
        premise = self._truncate(premise)
        hypothesis = self._truncate(hypothesis)
        key = cache_key("nli", self.config.model_id, premise, hypothesis)
        cached = self.cache.get(key)
        if cached is None:
            labels, probs = self._call(lambda: self.backend.infer(premise, hypothesis))
            cached = {"labels": list(labels), "probs": [float(p) for p in probs]}
            self.cache.put(key, cached, self.config.model_id)
        return verdict_from_response(cached["labels"], cached["probs"])


class WebSearchGateway(_RoleGateway):
    def web_search(self, query: str, k: int) -> list[tuple[str, str]]:
        """Up to k (snippet text, source URL) results."""
        if k < 0:
            raise BackendError(f"k must be >= 0, got {k}")
        if k == 0:
            return []
        key = cache_key("websearch", self.config.model_id, query, str(k))
        cached = self.cache.get(key)
        if cached is None:
            results = self._call(lambda: self.backend.search(query, k))
            cached = [[str(text), str(url)] for text, url in results]
            self.cache.put(key, cached, self.config.model_id)
        return [(text, url) for text, url in cached[:k]]


def verdict_from_response(labels: list[str], probs: list[float]) -> NliVerdict:
    """Shape-validate a backend's {labels, probs} pair into a canonical verdict."""
    if len(labels) != len(probs) or sorted(labels) != sorted(NLI_LABELS):
        raise BackendError(
            f"malformed NLI response: labels={labels!r} must cover {NLI_LABELS}"
        )
    by_label = {label: float(p) for label, p in zip(labels, probs)}
    probabilities = tuple(by_label[label] for label in NLI_LABELS)
    try:
        return NliVerdict(
            label=NLI_LABELS[int(np.argmax(probabilities))],
            probabilities=probabilities,
        )
    except ValueError as exc:
        raise BackendError(f"malformed NLI response: {exc}") from exc


@dataclass
class ModelGateway:
    """The bundle of role gateways a pipeline run needs."""

    chat: ChatGateway | None = None
    embedding: EmbeddingGateway | None = None
    nli: NliGateway | None = None
    websearch: WebSearchGateway | None = None

    def require(self, role: str):
        gateway = getattr(self, role, None)
        if gateway is None:
            raise GatewayError(f"no {role} backend configured")
        return gateway
