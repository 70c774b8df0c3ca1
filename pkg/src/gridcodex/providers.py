"""Chat-completion and embedding providers.

Two families: HTTP clients speaking the de-facto JSON chat-completions /
embeddings wire protocol (so any API-hosted or self-hosted model behind a
compatible server works), and deterministic scripted providers so the whole
pipeline runs offline in tests and CI.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .errors import (
    AuthError,
    ConfigError,
    ContextLengthExceeded,
    DimMismatch,
    TransportError,
)
from .tokens import count_tokens, tokenize

NORM_TOL = 1e-6


@dataclass
class ProviderConfig:
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        return os.environ.get(self.api_key_env)


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ConfigError(f"invalid chat role: {self.role}")


@dataclass
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)


@dataclass
class EmbeddingVector:
    values: np.ndarray  # float32, L2-normalized unless degenerate
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _normalize(raw: np.ndarray) -> EmbeddingVector:
    vec = np.asarray(raw, dtype=np.float32)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        return EmbeddingVector(values=np.zeros_like(vec), degenerate=True)
    return EmbeddingVector(values=(vec / norm).astype(np.float32))


def hash_embed(text: str, dim: int) -> EmbeddingVector:
    """Deterministic bag-of-hashed-tokens embedding for offline tests.

    Token overlap translates into cosine similarity; empty / tokenless text
    yields a degenerate zero vector that callers must exclude from indexing.
    """
    if dim < 8:
        raise ConfigError(f"hash_embed dim must be >= 8, got {dim}")
    counts = np.zeros(dim, dtype=np.float64)
    for token in tokenize(text.lower()):
        digest = hashlib.md5(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        counts[bucket] += 1.0
    return _normalize(counts)


class HashEmbedder:
    """Scripted embedding provider backed by hash_embed."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.call_log: list[list[str]] = []

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ConfigError("embed_batch requires at least one text")
        self.call_log.append(list(texts))
        return [hash_embed(t, self.dim) for t in texts]


@dataclass
class ScriptRule:
    """One scripted-chat rule: a match predicate plus a response recipe.

    kind:
      literal  - return `response` verbatim
      template - apply `pattern` (DOTALL regex) to the prompt and expand
                 `response` with the captured groups
    """

    name: str
    kind: str = "literal"
    contains: str | None = None
    pattern: str | None = None
    response: str = ""
    delay_ms: int = 0

    def matches(self, prompt: str) -> re.Match | bool | None:
        if self.contains is not None and self.contains not in prompt:
            return None
        if self.pattern is not None:
            return re.search(self.pattern, prompt, re.DOTALL)
        return True

    def render(self, prompt: str, match) -> str:
        if self.kind == "template" and isinstance(match, re.Match):
            return match.expand(self.response)
        if self.kind == "template":
            m = re.search(self.pattern or "", prompt, re.DOTALL)
            return m.expand(self.response) if m else self.response
        return self.response


class ScriptedChatProvider:
    """Deterministic chat provider driven by an ordered rule table.

    The first matching rule wins; a default rule (no predicate) is required
    so every prompt gets a response.
    """

    def __init__(self, rules: list[ScriptRule]):
        if not rules or not all(
            r.contains is None and r.pattern is None for r in rules[-1:]
        ):
            raise ConfigError("scripted chat requires a trailing default rule")
        self.rules = rules
        self.call_log: list[dict] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptRule(**r) for r in data["rules"]]
        return cls(rules)

    def chat(self, messages: list[ChatMessage]) -> ChatResponse:
        if not any(m.role == "user" for m in messages):
            raise ConfigError("chat requires at least one user message")
        prompt = "\n".join(m.content for m in messages)
        for rule in self.rules:
            match = rule.matches(prompt)
            if match:
                if rule.delay_ms:
                    time.sleep(rule.delay_ms / 1000.0)
                content = rule.render(prompt, match)
                self.call_log.append({"prompt": prompt, "rule": rule.name})
                return ChatResponse(content=content)
        raise ConfigError("scripted chat fell through the default rule")


class HttpChatProvider:
    """Chat client for /v1/chat/completions-style endpoints with retry."""

    def __init__(self, cfg: ProviderConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self.call_log: list[dict] = []

    def chat(self, messages: list[ChatMessage]) -> ChatResponse:
        if not any(m.role == "user" for m in messages):
            raise ConfigError("chat requires at least one user message")
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        data = _post_with_retry(
            self._client,
            f"{self.cfg.endpoint_url.rstrip('/')}/v1/chat/completions",
            payload,
            self.cfg,
            self.call_log,
            prompt_tokens=sum(count_tokens(m.content) for m in messages),
        )
        choice = data["choices"][0]
        return ChatResponse(
            content=choice["message"]["content"],
            finish_reason=choice.get("finish_reason", "stop"),
            usage=data.get("usage", {}),
        )


class HttpEmbeddingProvider:
    """Embedding client for /v1/embeddings-style endpoints with retry."""

    def __init__(self, cfg: ProviderConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self.call_log: list[dict] = []

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts or any(not t for t in texts):
            raise ConfigError("embed_batch requires non-empty texts")
        payload = {"model": self.cfg.model_name, "input": list(texts)}
        data = _post_with_retry(
            self._client,
            f"{self.cfg.endpoint_url.rstrip('/')}/v1/embeddings",
            payload,
            self.cfg,
            self.call_log,
        )
        rows = sorted(data["data"], key=lambda r: r["index"])
        vectors = [_normalize(np.asarray(r["embedding"], dtype=np.float64)) for r in rows]
        if len(vectors) != len(texts):
            raise DimMismatch(
                f"provider returned {len(vectors)} embeddings for {len(texts)} inputs"
            )
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise DimMismatch(f"provider returned inconsistent dims: {sorted(dims)}")
        return vectors


def _post_with_retry(
    client: httpx.Client,
    url: str,
    payload: dict,
    cfg: ProviderConfig,
    call_log: list[dict],
    prompt_tokens: int | None = None,
    sleep=time.sleep,
) -> dict:
    headers = {}
    key = cfg.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    last_error: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        call_log.append({"url": url, "attempt": attempt})
        try:
            resp = client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            last_error = TransportError(f"{url}: {exc}")
        else:
            if resp.status_code in (401, 403):
                raise AuthError(f"{url}: HTTP {resp.status_code}")
            if resp.status_code == 400 and "context" in resp.text.lower():
                raise ContextLengthExceeded(
                    f"{url}: context length exceeded", prompt_tokens=prompt_tokens
                )
            if resp.status_code >= 400:
                last_error = TransportError(f"{url}: HTTP {resp.status_code}")
            else:
                return resp.json()
        if attempt < cfg.max_retries:
            sleep(min(0.5 * (2**attempt), 8.0))
    raise last_error if last_error else TransportError(f"{url}: no response")
