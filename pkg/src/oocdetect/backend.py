"""Model backends: completion transport, response caching and embeddings.

Everything a pipeline run sends to a model goes through the small set of
types here.  Real traffic uses :class:`HttpChatBackend`; tests and offline
runs use :class:`ScriptedBackend`, which replays canned responses.  Wrapping
either in :class:`CachedBackend` gives content-addressed response reuse, so
a repeated run answers every request from disk.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx
import numpy as np

_ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 256
EMBEDDING_DIM = 256


class ImageUnavailable(OSError):
    """An image referenced by a request could not be read."""


class BackendRefused(RuntimeError):
    """The backend answered with a non-success status or unusable payload."""


class UnscriptedRequest(LookupError):
    """A scripted backend got a request no rule matches and has no default."""


class EmptyText(ValueError):
    """Embedding was asked for text with no content to embed."""


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    image: Optional[str] = None

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")
        if self.image is not None and self.role != "user":
            raise ValueError("images may only be attached to user messages")


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if not self.messages:
            raise ValueError("completion request needs at least one message")
        if sum(1 for m in self.messages if m.image is not None) > 1:
            raise ValueError("at most one image per request")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend_id: str
    cached: bool = False
    latency_ms: int = 0

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency cannot be negative")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ValueError("embedding length does not match its dimension")


class CompletionBackend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def _image_component(ref: str) -> str:
    """Cache-key component for an image reference.

    Local files contribute a digest of their bytes, so same path with
    different content yields a different key.  URL references contribute the
    URL itself; we never fetch during key computation.
    """
    if ref.startswith(("http://", "https://")):
        return "url:" + ref
    try:
        data = Path(ref).read_bytes()
    except OSError as exc:
        raise ImageUnavailable(f"cannot read image {ref!r}: {exc}") from exc
    return "sha256:" + hashlib.sha256(data).hexdigest()


def cache_key(backend_id: str, request: CompletionRequest) -> str:
    """Deterministic hex digest identifying one logical completion."""
    payload = {
        "backend_id": backend_id,
        "model_id": request.model_id,
        "messages": [
            {
                "role": m.role,
                "text": m.text,
                "image": _image_component(m.image) if m.image else None,
            }
            for m in request.messages
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per response under ``<root>/<2 hex>/<digest>.json``.

    Writes go to a temp file first and land via ``os.replace``, so readers
    never observe a partial entry and concurrent writers of the same key
    settle on one complete file.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _entry_path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> Optional[str]:
        path = self._entry_path(digest)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return None
        text = payload.get("response_text")
        return text if isinstance(text, str) else None

    def put(self, digest: str, response_text: str, backend_id: str) -> None:
        path = self._entry_path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "request_digest": digest,
            "response_text": response_text,
            "created_at": datetime.now(timezone.utc).isoformat(),
            "backend_id": backend_id,
        }
        tmp = path.with_suffix(f".tmp-{os.getpid()}-{threading.get_ident()}")
        tmp.write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True),
            encoding="utf-8",
        )
        os.replace(tmp, path)


@dataclass(frozen=True)
class CacheStats:
    requests: int
    hits: int

    @property
    def hit_rate(self) -> float:
        return self.hits / self.requests if self.requests else 0.0

    @property
    def misses(self) -> int:
        return self.requests - self.hits


class CachedBackend:
    """Content-addressed cache in front of any completion backend."""

    def __init__(self, inner: CompletionBackend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self._lock = threading.Lock()
        self._requests = 0
        self._hits = 0

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = cache_key(self.inner.backend_id, request)
        stored = self.cache.get(digest)
        with self._lock:
            self._requests += 1
            if stored is not None:
                self._hits += 1
        if stored is not None:
            return CompletionResponse(
                text=stored, backend_id=self.inner.backend_id, cached=True
            )
        response = self.inner.complete(request)
        self.cache.put(digest, response.text, self.inner.backend_id)
        return response

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(requests=self._requests, hits=self._hits)


class ScriptedBackend:
    """Deterministic mock: ordered substring rules over the joined prompt.

    Rules are (substring, response) pairs; the first rule whose substring
    occurs anywhere in the concatenated message texts wins.  With no match,
    the default response is returned, or :class:`UnscriptedRequest` is raised
    when no default was given.
    """

    def __init__(
        self,
        backend_id: str,
        rules: Sequence[tuple[str, str]] = (),
        default: Optional[str] = None,
    ):
        self.backend_id = backend_id
        self.rules = tuple(rules)
        self.default = default
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self._calls += 1
        joined = "\n".join(m.text for m in request.messages)
        for needle, canned in self.rules:
            if needle in joined:
                return CompletionResponse(text=canned, backend_id=self.backend_id)
        if self.default is not None:
            return CompletionResponse(text=self.default, backend_id=self.backend_id)
        raise UnscriptedRequest(
            f"no rule matches request starting {joined[:80]!r}"
        )


def _parse_response_path(path: str) -> tuple[object, ...]:
    parts: list[object] = []
    for raw in path.split("/"):
        parts.append(int(raw) if re.fullmatch(r"-?\d+", raw) else raw)
    return tuple(parts)


class HttpChatBackend:
    """Chat-completion endpoint speaking the usual JSON wire format.

    The request body carries the model id, the message list (text parts,
    plus one optional image part as base64 data or a URL), temperature and
    max_tokens.  The completion text is pulled from the response JSON at
    ``response_path`` ("/"-separated, integers index into lists).

    Transport failures are retried up to three attempts with exponential
    backoff starting at half a second.  Non-success statuses are not
    retried; they raise :class:`BackendRefused`.  The auth token is read
    from the environment variable named by ``token_env`` and is never
    logged or echoed into any artifact.
    """

    RETRY_ATTEMPTS = 3
    RETRY_BASE_DELAY = 0.5

    def __init__(
        self,
        backend_id: str,
        url: str,
        *,
        auth_header: str = "Authorization",
        auth_scheme: str = "Bearer",
        token_env: Optional[str] = None,
        response_path: str = "choices/0/message/content",
        timeout: float = 30.0,
        client: Optional[httpx.Client] = None,
        sleep=time.sleep,
    ):
        self.backend_id = backend_id
        self.url = url
        self.auth_header = auth_header
        self.auth_scheme = auth_scheme
        self.token_env = token_env
        self.response_path = _parse_response_path(response_path)
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if token:
                value = f"{self.auth_scheme} {token}" if self.auth_scheme else token
                headers[self.auth_header] = value
        return headers

    def _wire_body(self, request: CompletionRequest) -> dict:
        messages = []
        for m in request.messages:
            content: list[dict] = [{"type": "text", "text": m.text}]
            if m.image is not None:
                if m.image.startswith(("http://", "https://")):
                    content.append({"type": "image", "url": m.image})
                else:
                    try:
                        data = Path(m.image).read_bytes()
                    except OSError as exc:
                        raise ImageUnavailable(
                            f"cannot read image {m.image!r}: {exc}"
                        ) from exc
                    content.append(
                        {"type": "image", "data": base64.b64encode(data).decode("ascii")}
                    )
            messages.append({"role": m.role, "content": content})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def _extract_text(self, payload: object) -> str:
        node = payload
        for step in self.response_path:
            try:
                node = node[step]  # type: ignore[index]
            except (KeyError, IndexError, TypeError):
                raise BackendRefused(
                    f"{self.backend_id}: response has no completion text at "
                    f"{'/'.join(str(s) for s in self.response_path)}"
                ) from None
        if not isinstance(node, str):
            raise BackendRefused(f"{self.backend_id}: completion text is not a string")
        return node

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        body = self._wire_body(request)
        headers = self._headers()
        started = time.monotonic()
        last_error: Optional[httpx.TransportError] = None
        for attempt in range(self.RETRY_ATTEMPTS):
            if attempt:
                self._sleep(self.RETRY_BASE_DELAY * (2 ** (attempt - 1)))
            try:
                reply = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if reply.status_code // 100 != 2:
                raise BackendRefused(
                    f"{self.backend_id}: HTTP {reply.status_code}: {reply.text[:200]}"
                )
            text = self._extract_text(reply.json())
            elapsed = int((time.monotonic() - started) * 1000)
            return CompletionResponse(
                text=text, backend_id=self.backend_id, latency_ms=elapsed
            )
        assert last_error is not None
        raise last_error


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class HashedEmbeddingBackend:
    """Deterministic bag-of-words embedding for similarity scoring.

    Lowercases, splits on non-alphanumerics, hashes each token into one of
    256 buckets (sha256), counts occurrences and L2-normalizes.  Texts with
    the same token multiset embed identically; token-disjoint texts are
    orthogonal unless buckets collide.
    """

    def __init__(self, backend_id: str = "hashed-bow", dim: int = EMBEDDING_DIM):
        self.backend_id = backend_id
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, text: str) -> EmbeddingVector:
        tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
        if not tokens:
            raise EmptyText("no tokens to embed")
        counts = np.zeros(self.dim, dtype=float)
        for token in tokens:
            counts[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(counts))
        values = tuple(float(v) for v in counts / norm)
        return EmbeddingVector(values=values, dim=self.dim)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise ValueError("cannot compare embeddings of different dimensions")
    va = np.asarray(a.values)
    vb = np.asarray(b.values)
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    return float(np.dot(va, vb) / denom)
