"""Uniform contracts for external intelligence services.

Chat completion, embeddings, web search, and search-grounded deep research
all flow through the interfaces defined here. Every interface ships with a
deterministic scripted implementation so the whole test suite runs offline.
No other module constructs a network request to an intelligence service.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_TIMEOUT_SECS = 30.0
SCRIPTED_EMBED_DIM = 16


class ProviderError(Exception):
    """Base class for provider failures."""

    retryable = False


class ProviderUnavailable(ProviderError):
    """Transient failure (timeout, 5xx); safe to retry."""

    retryable = True


class ScriptExhausted(ProviderError):
    """A scripted provider ran out of canned responses; a test-fixture bug."""


class DimensionMismatch(ProviderError):
    pass


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    backoff_secs: float = 0.0


def with_retry(call: Callable, policy: RetryPolicy = RetryPolicy()):
    """Invoke `call`, retrying only retryable provider errors.

    Surfaces the last error once attempts are exhausted; non-retryable
    errors propagate immediately.
    """
    if policy.max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    last: Optional[BaseException] = None
    for attempt in range(policy.max_attempts):
        try:
            return call()
        except ProviderError as exc:
            if not exc.retryable:
                raise
            last = exc
            if attempt + 1 < policy.max_attempts and policy.backoff_secs:
                time.sleep(policy.backoff_secs * (2**attempt))
    assert last is not None
    raise last


# --- interfaces ------------------------------------------------------------


class ChatProvider(ABC):
    @abstractmethod
    def complete(
        self,
        messages: Sequence[dict],
        temperature: float = 0.0,
        max_tokens: Optional[int] = None,
    ) -> str:
        """Return the completion text for a list of {role, content} messages."""


class EmbeddingProvider(ABC):
    @abstractmethod
    def embed(self, texts: Sequence[str], profile: str) -> list[list[float]]:
        """One vector per text, order preserving, stable dimension per profile."""

    @abstractmethod
    def dimension(self, profile: str) -> int: ...


class WebSearchProvider(ABC):
    @abstractmethod
    def search(self, query: str, site_filter: Optional[str] = None) -> list[dict]:
        """Ranked results as {title, url, description} dicts."""


class DeepResearchProvider(ABC):
    @abstractmethod
    def research(self, question: str, allowed_domains: Optional[Sequence[str]] = None) -> dict:
        """Returns {answer_text, source_urls, candidate_cases}."""


# --- scripted implementations ----------------------------------------------


class _Script:
    """Thread-safe ordered queue of canned responses."""

    def __init__(self, responses: Sequence):
        if not responses:
            raise ValueError("script must be non-empty")
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.calls: list = []

    def next(self, call_record) -> object:
        with self._lock:
            self.calls.append(call_record)
            if not self._responses:
                raise ScriptExhausted(f"script exhausted at call {call_record!r}")
            return self._responses.pop(0)


class ScriptedChatProvider(ChatProvider):
    """Replays canned completions in order; records every call for assertions."""

    def __init__(self, responses: Sequence[str]):
        self._script = _Script(responses)

    @property
    def calls(self) -> list:
        return self._script.calls

    def complete(self, messages, temperature=0.0, max_tokens=None) -> str:
        response = self._script.next(list(messages))
        if isinstance(response, Exception):
            raise response
        return response


class ScriptedWebSearchProvider(WebSearchProvider):
    def __init__(self, responses: Sequence[list]):
        self._script = _Script(responses)

    @property
    def calls(self) -> list:
        return self._script.calls

    def search(self, query, site_filter=None):
        response = self._script.next((query, site_filter))
        if isinstance(response, Exception):
            raise response
        return response


class ScriptedResearchProvider(DeepResearchProvider):
    def __init__(self, responses: Sequence[dict]):
        self._script = _Script(responses)

    @property
    def calls(self) -> list:
        return self._script.calls

    def research(self, question, allowed_domains=None):
        response = self._script.next((question, tuple(allowed_domains or ())))
        if isinstance(response, Exception):
            raise response
        return response


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic embeddings derived from a seeded hash of the input text.

    Same text always maps to the same unit vector, so similarity geometry is
    stable across runs. An overrides map pins exact vectors for texts that
    threshold tests need to place precisely.
    """

    def __init__(
        self,
        dim: int = SCRIPTED_EMBED_DIM,
        seed: int = 0,
        overrides: Optional[dict[tuple[str, str], Sequence[float]]] = None,
    ):
        self._dim = dim
        self._seed = seed
        self._overrides = {k: list(v) for k, v in (overrides or {}).items()}

    def dimension(self, profile: str) -> int:
        return self._dim

    def set_override(self, text: str, profile: str, vector: Sequence[float]) -> None:
        if len(vector) != self._dim:
            raise DimensionMismatch(f"override has length {len(vector)}, expected {self._dim}")
        self._overrides[(text, profile)] = list(vector)

    def _vector(self, text: str, profile: str) -> list[float]:
        override = self._overrides.get((text, profile))
        if override is not None:
            return list(override)
        digest = hashlib.sha256(f"{self._seed}:{profile}:{text}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self._dim)
        v /= np.linalg.norm(v)
        return v.tolist()

    def embed(self, texts, profile):
        return [self._vector(t, profile) for t in texts]


# --- HTTP-backed implementations -------------------------------------------


@dataclass
class ProviderConfig:
    """Endpoint + credential configuration, read from the environment."""

    chat_url: Optional[str] = None
    chat_key: Optional[str] = None
    embed_url: Optional[str] = None
    embed_key: Optional[str] = None
    websearch_url: Optional[str] = None
    websearch_key: Optional[str] = None
    research_url: Optional[str] = None
    research_key: Optional[str] = None
    timeout_secs: float = DEFAULT_TIMEOUT_SECS
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    @staticmethod
    def from_env(env=os.environ) -> "ProviderConfig":
        return ProviderConfig(
            chat_url=env.get("CHAT_PROVIDER_URL"),
            chat_key=env.get("CHAT_PROVIDER_KEY"),
            embed_url=env.get("EMBED_PROVIDER_URL"),
            embed_key=env.get("EMBED_PROVIDER_KEY"),
            websearch_url=env.get("WEBSEARCH_PROVIDER_URL"),
            websearch_key=env.get("WEBSEARCH_PROVIDER_KEY"),
            research_url=env.get("RESEARCH_PROVIDER_URL"),
            research_key=env.get("RESEARCH_PROVIDER_KEY"),
            timeout_secs=float(env.get("PROVIDER_TIMEOUT_SECS", DEFAULT_TIMEOUT_SECS)),
        )


def _post_json(url: str, key: Optional[str], payload: dict, timeout: float) -> dict:
    import httpx

    headers = {"Authorization": f"Bearer {key}"} if key else {}
    try:
        response = httpx.post(url, json=payload, headers=headers, timeout=timeout)
    except httpx.TimeoutException as exc:
        raise ProviderUnavailable(f"timeout calling {url}") from exc
    except httpx.HTTPError as exc:
        raise ProviderUnavailable(f"transport error calling {url}: {exc}") from exc
    if response.status_code >= 500:
        raise ProviderUnavailable(f"{url} returned {response.status_code}")
    if response.status_code >= 400:
        raise ProviderError(f"{url} returned {response.status_code}: {response.text[:200]}")
    return response.json()


class HttpChatProvider(ChatProvider):
    """OpenAI-style chat completions endpoint."""

    def __init__(self, config: ProviderConfig, model: Optional[str] = None):
        if not config.chat_url:
            raise ValueError("CHAT_PROVIDER_URL not configured")
        self._config = config
        self._model = model

    def complete(self, messages, temperature=0.0, max_tokens=None) -> str:
        payload: dict = {"messages": list(messages), "temperature": temperature}
        if self._model:
            payload["model"] = self._model
        if max_tokens:
            payload["max_tokens"] = max_tokens

        def call():
            data = _post_json(
                self._config.chat_url, self._config.chat_key, payload, self._config.timeout_secs
            )
            text = data["choices"][0]["message"]["content"]
            if not text:
                raise ProviderError("chat provider returned empty text")
            return text

        return with_retry(call, self._config.retry)


class HttpEmbeddingProvider(EmbeddingProvider):
    """OpenAI-style embeddings endpoint; one model per profile."""

    def __init__(self, config: ProviderConfig, models: dict[str, str], dims: dict[str, int]):
        if not config.embed_url:
            raise ValueError("EMBED_PROVIDER_URL not configured")
        self._config = config
        self._models = models
        self._dims = dims

    def dimension(self, profile: str) -> int:
        return self._dims[profile]

    def embed(self, texts, profile):
        if not texts:
            return []
        payload = {"model": self._models[profile], "input": list(texts)}

        def call():
            data = _post_json(
                self._config.embed_url, self._config.embed_key, payload, self._config.timeout_secs
            )
            vectors = [item["embedding"] for item in data["data"]]
            for v in vectors:
                if len(v) != self._dims[profile]:
                    raise DimensionMismatch(
                        f"expected dimension {self._dims[profile]}, got {len(v)}"
                    )
            return vectors

        return with_retry(call, self._config.retry)


class HttpWebSearchProvider(WebSearchProvider):
    """Serper-style search endpoint returning organic results."""

    def __init__(self, config: ProviderConfig, max_results: int = 5):
        if not config.websearch_url:
            raise ValueError("WEBSEARCH_PROVIDER_URL not configured")
        self._config = config
        self._max_results = max_results

    def search(self, query, site_filter=None):
        q = f"site:{site_filter} {query}" if site_filter else query

        def call():
            data = _post_json(
                self._config.websearch_url,
                self._config.websearch_key,
                {"q": q},
                self._config.timeout_secs,
            )
            organic = data.get("organic", [])[: self._max_results]
            return [
                {
                    "title": r.get("title", ""),
                    "url": r.get("link", r.get("url", "")),
                    "description": r.get("snippet", r.get("description", "")),
                }
                for r in organic
            ]

        return with_retry(call, self._config.retry)


class HttpResearchProvider(DeepResearchProvider):
    """Search-grounded research endpoint (chat-style with citations)."""

    def __init__(self, config: ProviderConfig, model: Optional[str] = None):
        if not config.research_url:
            raise ValueError("RESEARCH_PROVIDER_URL not configured")
        self._config = config
        self._model = model

    def research(self, question, allowed_domains=None):
        payload: dict = {"messages": [{"role": "user", "content": question}]}
        if self._model:
            payload["model"] = self._model
        if allowed_domains:
            payload["search_domain_filter"] = list(allowed_domains)

        def call():
            data = _post_json(
                self._config.research_url,
                self._config.research_key,
                payload,
                self._config.timeout_secs,
            )
            return {
                "answer_text": data["choices"][0]["message"]["content"],
                "source_urls": data.get("citations", []),
                "candidate_cases": data.get("candidate_cases"),
            }

        return with_retry(call, self._config.retry)
