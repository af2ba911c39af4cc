from __future__ import annotations

import pytest

from icat.backends import (
    HashEmbeddingBackend,
    MockChatBackend,
    SubstringNliBackend,
)
from icat.gateway import (
    BackendConfig,
    ChatGateway,
    EmbeddingGateway,
    ModelGateway,
    NliGateway,
    ResponseCache,
    WebSearchGateway,
)


def backend_config(role: str, **overrides) -> BackendConfig:
    values = dict(role=role, max_retries=2, retry_backoff_s=0.0)
    values.update(overrides)
    return BackendConfig(**values)


def chat_gateway(backend: MockChatBackend, cache: ResponseCache | None = None, **cfg):
    return ChatGateway(backend_config("chat", **cfg), backend, cache)


def embedding_gateway(backend=None, cache=None, **cfg):
    return EmbeddingGateway(
        backend_config("embedding", **cfg), backend or HashEmbeddingBackend(), cache
    )


def nli_gateway(backend=None, cache=None, **cfg):
    return NliGateway(backend_config("nli", **cfg), backend or SubstringNliBackend(), cache)


def websearch_gateway(backend, cache=None, **cfg):
    return WebSearchGateway(backend_config("websearch", **cfg), backend, cache)


def mock_gateways(chat_rules=None, chat_exact=None, dim: int = 256) -> ModelGateway:
    return ModelGateway(
        chat=chat_gateway(MockChatBackend(rules=chat_rules or [], exact=chat_exact or {})),
        embedding=embedding_gateway(HashEmbeddingBackend(dim=dim)),
        nli=nli_gateway(SubstringNliBackend()),
    )


@pytest.fixture
def gateways() -> ModelGateway:
    return mock_gateways()
