"""Run configuration file: backend sections plus engine knobs.

JSON shape:

    {
      "backends": {
        "chat":      {"kind": "openai", "endpoint": "...", "model_id": "...",
                      "timeout_ms": 30000, "max_retries": 2, "max_in_flight": 4,
                      "temperature": 0, "api_key_env": "CHAT_API_KEY"},
        "embedding": {"kind": "hash", "dim": 256},
        "nli":       {"kind": "substring"},
        "websearch": {"kind": "fixture", "fixtures": "web_fixtures.json"}
      },
      "cache_dir": ".icat-cache",
      "cache_enabled": true,
      "prompts_dir": null,
      "run": {"k_snippets": 10, "pool_size": 1000, "pooling": true, ...}
    }

Mock kinds (mock chat, hash embedding, substring NLI, fixture websearch)
make the whole pipeline runnable offline; the HTTP kinds talk to real
services. Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

from .backends import (
    FixtureWebSearchBackend,
    HashEmbeddingBackend,
    JsonNliBackend,
    JsonWebSearchBackend,
    MockChatBackend,
    OpenAiChatBackend,
    OpenAiEmbeddingBackend,
    SubstringNliBackend,
)
from .gateway import (
    BackendConfig,
    ChatGateway,
    EmbeddingGateway,
    ModelGateway,
    NliGateway,
    ResponseCache,
    WebSearchGateway,
)
from .prompts import PromptLibrary


class ConfigFileError(ValueError):
    pass


def _backend_config(role: str, section: dict) -> BackendConfig:
    return BackendConfig(
        role=role,
        endpoint=section.get("endpoint", ""),
        model_id=section.get("model_id", ""),
        timeout=float(section.get("timeout_ms", 30000)) / 1000.0,
        max_retries=int(section.get("max_retries", 2)),
        temperature=float(section.get("temperature", 0.0)),
        max_in_flight=int(section.get("max_in_flight", 4)),
        retry_backoff_s=float(section.get("retry_backoff_ms", 500)) / 1000.0,
        truncate_chars=int(section.get("truncate_chars", 2000)),
        batch_size=int(section.get("batch_size", 64)),
        api_key_env=section.get("api_key_env"),
    )


def _load_chat_fixtures(path: Path) -> MockChatBackend:
    data = json.loads(path.read_text(encoding="utf-8"))
    rules = [
        (list(rule["contains"]), rule["reply"]) for rule in data.get("rules", [])
    ]
    return MockChatBackend(rules=rules, exact=data.get("exact", {}))


def _build_backend(role: str, section: dict, base_dir: Path):
    kind = section.get("kind", "openai" if role in ("chat", "embedding") else "http")
    if role == "chat":
        if kind == "openai":
            return OpenAiChatBackend(_backend_config(role, section))
        if kind == "mock":
            fixtures = section.get("fixtures")
            if not fixtures:
                raise ConfigFileError("mock chat backend needs a 'fixtures' file")
            return _load_chat_fixtures(base_dir / fixtures)
    elif role == "embedding":
        if kind == "openai":
            return OpenAiEmbeddingBackend(_backend_config(role, section))
        if kind == "hash":
            return HashEmbeddingBackend(dim=int(section.get("dim", 256)))
    elif role == "nli":
        if kind == "http":
            return JsonNliBackend(_backend_config(role, section))
        if kind == "substring":
            return SubstringNliBackend()
    elif role == "websearch":
        if kind == "http":
            return JsonWebSearchBackend(_backend_config(role, section))
        if kind == "fixture":
            fixtures_file = section.get("fixtures")
            if not fixtures_file:
                raise ConfigFileError("fixture websearch backend needs a 'fixtures' file")
            raw = json.loads((base_dir / fixtures_file).read_text(encoding="utf-8"))
            fixtures = {
                query: [(item["snippet"], item.get("url", "")) for item in items]
                for query, items in raw.items()
            }
            return FixtureWebSearchBackend(fixtures)
    raise ConfigFileError(f"unknown backend kind {kind!r} for role {role!r}")


_GATEWAY_CLASSES = {
    "chat": ChatGateway,
    "embedding": EmbeddingGateway,
    "nli": NliGateway,
    "websearch": WebSearchGateway,
}


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigFileError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigFileError(f"config {path} must be a JSON object")
    data["_base_dir"] = str(path.parent)
    return data


def build_gateways(config: dict) -> ModelGateway:
    base_dir = Path(config.get("_base_dir", "."))
    cache = ResponseCache(
        config.get("cache_dir"), enabled=bool(config.get("cache_enabled", True))
    )
    gateway = ModelGateway()
    for role, section in (config.get("backends") or {}).items():
        if role not in _GATEWAY_CLASSES:
            raise ConfigFileError(f"unknown backend role {role!r}")
        backend = _build_backend(role, section, base_dir)
        setattr(
            gateway,
            role,
            _GATEWAY_CLASSES[role](_backend_config(role, section), backend, cache),
        )
    return gateway


def build_prompts(config: dict) -> PromptLibrary:
    prompts_dir = config.get("prompts_dir")
    if prompts_dir:
        base_dir = Path(config.get("_base_dir", "."))
        return PromptLibrary(base_dir / prompts_dir)
    return PromptLibrary()
