"""Transport backends behind the gateway: HTTP implementations for real
services and deterministic in-process mocks for tests and offline runs.

HTTP wire shapes:
  chat       POST {endpoint}: OpenAI-compatible chat completions
  embedding  POST {endpoint}: OpenAI-compatible embeddings
  nli        POST {endpoint}: {"premise": ..., "hypothesis": ...}
             -> {"labels": [...], "probs": [...]}
  websearch  POST {endpoint}: {"query": ..., "k": n}
             -> {"results": [{"snippet": ..., "url": ...}, ...]}
"""

from __future__ import annotations

import hashlib
import threading

import httpx
import numpy as np

from .gateway import BackendConfig, BackendError, TransientBackendError


def _post_json(config: BackendConfig, payload: dict) -> dict:
    headers = {"Content-Type": "application/json"}
    key = config.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    try:
        response = httpx.post(
            config.endpoint, json=payload, headers=headers, timeout=config.timeout
        )
    except httpx.HTTPError as exc:
        raise TransientBackendError(f"transport failure: {exc}") from exc
    if response.status_code >= 500 or response.status_code == 429:
        raise TransientBackendError(f"backend status {response.status_code}")
    if response.status_code >= 400:
        raise BackendError(f"backend status {response.status_code}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError as exc:
        raise BackendError(f"backend returned non-JSON body: {exc}") from exc


class OpenAiChatBackend:
    def __init__(self, config: BackendConfig):
        self.config = config

    def complete(self, prompt: str, temperature: float) -> str:
        data = _post_json(
            self.config,
            {
                "model": self.config.model_id,
                "temperature": temperature,
                "messages": [{"role": "user", "content": prompt}],
            },
        )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {exc}") from exc


class OpenAiEmbeddingBackend:
    def __init__(self, config: BackendConfig):
        self.config = config

    def embed(self, texts: list[str]) -> list[list[float]]:
        data = _post_json(
            self.config, {"model": self.config.model_id, "input": texts}
        )
        try:
            items = sorted(data["data"], key=lambda item: item["index"])
            return [item["embedding"] for item in items]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {exc}") from exc


class JsonNliBackend:
    def __init__(self, config: BackendConfig):
        self.config = config

    def infer(self, premise: str, hypothesis: str) -> tuple[list[str], list[float]]:
        data = _post_json(self.config, {"premise": premise, "hypothesis": hypothesis})
        try:
            return list(data["labels"]), [float(p) for p in data["probs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed NLI response: {exc}") from exc


class JsonWebSearchBackend:
    def __init__(self, config: BackendConfig):
        self.config = config

    def search(self, query: str, k: int) -> list[tuple[str, str]]:
        data = _post_json(self.config, {"query": query, "k": k})
        try:
            return [(item["snippet"], item.get("url", "")) for item in data["results"]]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed web search response: {exc}") from exc


# --- deterministic mocks --------------------------------------------------


class _ConcurrencyProbe:
    """Tracks current and peak in-flight calls; used to test the gateway limit."""

    def __init__(self):
        self._lock = threading.Lock()
        self._current = 0
        self.max_concurrent = 0

    def __enter__(self):
        with self._lock:
            self._current += 1
            self.max_concurrent = max(self.max_concurrent, self._current)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self._current -= 1
        return False


class MockChatBackend:
    """Canned chat completions, matched fail-loud.

    `exact` maps a full prompt string to a reply. `rules` is an ordered list
    of (required substrings, reply): the first rule whose substrings all
    occur in the prompt wins. Prompts matching nothing raise, so fixtures
    that drift from the prompts under test fail immediately.
    """

    def __init__(
        self,
        rules: list[tuple[list[str], str]] | None = None,
        exact: dict[str, str] | None = None,
    ):
        self.rules = rules or []
        self.exact = exact or {}
        self.calls: list[str] = []
        self.probe = _ConcurrencyProbe()
        self._lock = threading.Lock()

    def complete(self, prompt: str, temperature: float) -> str:
        with self.probe:
            with self._lock:
                self.calls.append(prompt)
            if prompt in self.exact:
                return self.exact[prompt]
            for needles, reply in self.rules:
                if all(needle in prompt for needle in needles):
                    return reply
            raise BackendError(
                f"no fixture for chat prompt (first 120 chars): {prompt[:120]!r}"
            )


class HashEmbeddingBackend:
    """Deterministic bag-of-words feature hashing.

    Every lowercased token contributes a unit pseudo-random direction seeded
    by its own hash, so identical texts embed identically and texts sharing
    vocabulary land close together. Good enough to make mock retrieval
    behave like a real dense retriever.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.calls: list[list[str]] = []
        self.probe = _ConcurrencyProbe()
        self._lock = threading.Lock()
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._token_cache[token] = vec
        return vec

    def embed(self, texts: list[str]) -> list[list[float]]:
        with self.probe:
            with self._lock:
                self.calls.append(list(texts))
            out = []
            for text in texts:
                tokens = text.lower().split()
                if tokens:
                    vec = np.sum([self._token_vector(t) for t in tokens], axis=0)
                    norm = np.linalg.norm(vec)
                    if norm == 0:
                        vec = self._token_vector(text.lower())
                    else:
                        vec = vec / norm
                else:
                    vec = self._token_vector("")
                out.append([float(x) for x in vec])
            return out


def _normalize_for_match(text: str) -> str:
    return " ".join(text.lower().split())


class SubstringNliBackend:
    """Rule NLI: hypothesis contained in premise (case/whitespace folded)
    -> entailment, otherwise neutral."""

    ENTAIL = (0.97, 0.02, 0.01)
    NEUTRAL = (0.05, 0.90, 0.05)

    def __init__(self):
        self.calls: list[tuple[str, str]] = []
        self.probe = _ConcurrencyProbe()
        self._lock = threading.Lock()

    def infer(self, premise: str, hypothesis: str) -> tuple[list[str], list[float]]:
        with self.probe:
            with self._lock:
                self.calls.append((premise, hypothesis))
            if _normalize_for_match(hypothesis) in _normalize_for_match(premise):
                probs = self.ENTAIL
            else:
                probs = self.NEUTRAL
            return ["entailment", "neutral", "contradiction"], list(probs)


class FixtureWebSearchBackend:
    """Canned web search results keyed by exact query string; fail-loud."""

    def __init__(self, fixtures: dict[str, list[tuple[str, str]]]):
        self.fixtures = fixtures
        self.calls: list[str] = []
        self.probe = _ConcurrencyProbe()
        self._lock = threading.Lock()

    def search(self, query: str, k: int) -> list[tuple[str, str]]:
        with self.probe:
            with self._lock:
                self.calls.append(query)
            if query not in self.fixtures:
                raise BackendError(f"no fixture for web search query {query!r}")
            return self.fixtures[query][:k]
