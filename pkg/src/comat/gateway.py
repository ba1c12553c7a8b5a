"""Backend-agnostic chat completion client with a write-once response cache.

Two backends are provided: an HTTP backend speaking the common
``POST {base}/chat/completions`` shape, and an offline mock backend driven
by a script file so whole runs replay deterministically without network.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .errors import ComatError

DEFAULT_MODEL = "gpt-4o"
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 3500
DEFAULT_CONCURRENCY = 4

ENV_API_KEY = "COMAT_API_KEY"
ENV_API_BASE = "COMAT_API_BASE"
ENV_CACHE_DIR = "COMAT_CACHE_DIR"


class GatewayError(ComatError):
    """The backend failed to produce a completion."""


class ScriptMissError(GatewayError):
    """The mock script has no entry matching a request."""

    def __init__(self, digest: str, preview: str) -> None:
        super().__init__(f"no scripted response for request {digest[:12]} ({preview!r})")
        self.digest = digest


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def to_json_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenerationParams:
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[Message, ...]
    params: GenerationParams = field(default_factory=GenerationParams)

    def to_json_dict(self) -> dict[str, object]:
        return {
            "messages": [m.to_json_dict() for m in self.messages],
            "params": {
                "model": self.params.model,
                "temperature": self.params.temperature,
                "max_tokens": self.params.max_tokens,
            },
        }


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: str = "stop"
    model: str = DEFAULT_MODEL
    latency_ms: int = 0
    cached: bool = False


def cache_key(request: CompletionRequest) -> str:
    """Stable content address: sha256 over the canonical request JSON."""
    blob = json.dumps(
        request.to_json_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    writes: int = 0


class ResponseCache:
    """Content-addressed store of completed responses.

    Layout is ``<root>/<digest[:2]>/<digest>.json``.  Writes go through a
    temp file and an atomic replace; an existing entry is never rewritten,
    so a concurrent writer racing on the same key is harmless.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.stats = CacheStats()
        self._lock = threading.Lock()

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> CompletionResponse | None:
        path = self._path(digest)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            with self._lock:
                self.stats.misses += 1
            return None
        except (OSError, json.JSONDecodeError) as exc:
            raise GatewayError(f"unreadable cache entry {path}: {exc}") from exc
        with self._lock:
            self.stats.hits += 1
        return CompletionResponse(
            text=payload["text"],
            finish_reason=payload.get("finish_reason", "stop"),
            model=payload.get("model", DEFAULT_MODEL),
            latency_ms=int(payload.get("latency_ms", 0)),
            cached=True,
        )

    def put(self, digest: str, response: CompletionResponse) -> None:
        path = self._path(digest)
        if path.exists():
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "text": response.text,
            "finish_reason": response.finish_reason,
            "model": response.model,
            "latency_ms": response.latency_ms,
        }
        tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        os.replace(tmp, path)
        with self._lock:
            self.stats.writes += 1


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def _truncate_ws_tokens(text: str, limit: int) -> str:
    tokens = text.split()
    return " ".join(tokens[:limit])


class MockBackend:
    """Replays responses from a JSONL script; never touches the network.

    Each script line is an object with a ``match`` clause and a
    ``response`` clause::

        {"match": {"substring": "holds 31,000 fans"},
         "response": {"text": "...", "finish_reason": "stop"}}

    ``match`` keys: ``digest`` (exact cache key) or ``substring`` (tested
    against the concatenated message contents).  The first matching entry
    wins.  A request no entry matches raises ScriptMissError.  A
    ``truncate`` count in the response clause keeps only that many
    whitespace-separated tokens and forces ``finish_reason`` to "length",
    mimicking a completion cut off by the token budget.
    """

    def __init__(self, script_path: str | Path | None = None, *, latency_ms: int = 0) -> None:
        self.latency_ms = latency_ms
        self._entries: list[dict[str, object]] = []
        if script_path is not None:
            self._entries = self._load(Path(script_path))

    @staticmethod
    def _load(path: Path) -> list[dict[str, object]]:
        entries: list[dict[str, object]] = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GatewayError(f"{path}:{lineno}: bad script line: {exc}") from exc
            if "match" not in entry or "response" not in entry:
                raise GatewayError(f"{path}:{lineno}: script line needs match and response")
            entries.append(entry)
        return entries

    def add(self, match: dict[str, str], response: dict[str, object]) -> None:
        self._entries.append({"match": match, "response": response})

    def _matches(self, clause: dict[str, str], digest: str, joined: str) -> bool:
        if "digest" in clause:
            return clause["digest"] == digest
        if "substring" in clause:
            return clause["substring"] in joined
        raise GatewayError(f"unsupported match clause: {sorted(clause)}")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = cache_key(request)
        joined = "\n".join(m.content for m in request.messages)
        for entry in self._entries:
            if not self._matches(entry["match"], digest, joined):  # type: ignore[arg-type]
                continue
            shape: dict[str, object] = entry["response"]  # type: ignore[assignment]
            text = str(shape.get("text", ""))
            finish = str(shape.get("finish_reason", "stop"))
            if "truncate" in shape:
                text = _truncate_ws_tokens(text, int(shape["truncate"]))  # type: ignore[arg-type]
                finish = "length"
            return CompletionResponse(
                text=text,
                finish_reason=finish,
                model=request.params.model,
                latency_ms=self.latency_ms,
            )
        tail = request.messages[-1].content if request.messages else ""
        raise ScriptMissError(digest, tail[-80:])


# transport: (url, headers, payload, timeout) -> (status_code, parsed_body)
Transport = Callable[[str, dict[str, str], dict[str, object], float], tuple[int, object]]


def _requests_transport(url: str, headers: dict[str, str], payload: dict[str, object], timeout: float) -> tuple[int, object]:
    import requests

    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body: object = resp.json()
    except ValueError:
        body = resp.text
    return resp.status_code, body


class HttpBackend:
    """Client for a bearer-token chat-completions endpoint.

    Transient failures (transport errors, 429, any 5xx) are retried up to
    three attempts with backoff 1s, 2s, 4s; other HTTP errors fail fast.
    The transport and the sleep function are injectable for tests.
    """

    RETRIES = 3
    BACKOFF_S = (1.0, 2.0, 4.0)

    def __init__(
        self,
        api_base: str,
        api_key: str,
        *,
        timeout_s: float = 120.0,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not api_base:
            raise GatewayError("http backend needs an api base url")
        if not api_key:
            raise GatewayError(f"http backend needs an api key (set {ENV_API_KEY})")
        self.url = api_base.rstrip("/") + "/chat/completions"
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._transport = transport or _requests_transport
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        payload: dict[str, object] = {
            "model": request.params.model,
            "messages": [m.to_json_dict() for m in request.messages],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        }
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        last_error = "exhausted retries"
        for attempt in range(self.RETRIES):
            start = time.monotonic()
            try:
                status, body = self._transport(self.url, headers, payload, self.timeout_s)
            except Exception as exc:  # noqa: BLE001 - transport errors are retryable
                last_error = f"transport error: {exc}"
                if attempt + 1 < self.RETRIES:
                    self._sleep(self.BACKOFF_S[attempt])
                continue
            elapsed_ms = int((time.monotonic() - start) * 1000)
            if status == 429 or status >= 500:
                last_error = f"http {status}"
                if attempt + 1 < self.RETRIES:
                    self._sleep(self.BACKOFF_S[attempt])
                continue
            if status != 200:
                raise GatewayError(f"http {status}: {str(body)[:200]}")
            try:
                choice = body["choices"][0]  # type: ignore[index]
                text = choice["message"]["content"]
                finish = choice.get("finish_reason", "stop")
                model = body.get("model", request.params.model)  # type: ignore[union-attr]
            except (KeyError, IndexError, TypeError) as exc:
                raise GatewayError(f"malformed completion body: {exc}") from exc
            return CompletionResponse(
                text=text,
                finish_reason=str(finish),
                model=str(model),
                latency_ms=elapsed_ms,
            )
        raise GatewayError(f"request failed after {self.RETRIES} attempts: {last_error}")


# ---------------------------------------------------------------------------
# gateway
# ---------------------------------------------------------------------------

class Gateway:
    """Cache-fronted completion client safe for concurrent use.

    An in-flight semaphore bounds simultaneous backend calls; cache hits
    bypass both the semaphore and the backend.
    """

    def __init__(
        self,
        backend: Backend,
        cache: ResponseCache | None = None,
        *,
        concurrency: int = DEFAULT_CONCURRENCY,
    ) -> None:
        if concurrency < 1:
            raise GatewayError("concurrency must be at least 1")
        self.backend = backend
        self.cache = cache
        self._semaphore = threading.Semaphore(concurrency)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = cache_key(request)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return hit
        with self._semaphore:
            response = self.backend.complete(request)
        if self.cache is not None:
            self.cache.put(digest, response)
        return response

    @property
    def stats(self) -> CacheStats:
        return self.cache.stats if self.cache is not None else CacheStats()
