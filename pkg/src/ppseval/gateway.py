"""Provider-agnostic chat-completion client.

One gateway fronts every model role in a run. It adds retries with
exponential backoff, a content-addressed response cache, a JSONL transcript
of every live completion, and bounded per-endpoint concurrency. Tests and
offline runs swap the HTTP backend for a deterministic scripted mock that
never fabricates output.
"""

import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

import httpx

from .errors import AuthenticationError, GatewayError, TransportError, UnscriptedCallError

logger = logging.getLogger(__name__)

_ROLES = ("system", "user", "assistant")

# HTTP statuses worth another attempt
_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}
_AUTH_STATUSES = {401, 403}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise GatewayError(f"unknown message role: {self.role}")
        if self.role in ("system", "user") and not self.content:
            raise GatewayError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class ModelEndpoint:
    """One model role in a run (solver, verifier-1, meta, judge, ...)."""

    name: str
    base_url: str
    model_id: str
    temperature: float = 0.0
    max_tokens: int = 4096
    seed: Optional[int] = None
    api_key_env: Optional[str] = None


@dataclass
class CompletionResult:
    text: str
    prompt_digest: str
    latency: float
    attempt_count: int
    from_cache: bool


def cache_key(endpoint: ModelEndpoint, messages: list[ChatMessage]) -> str:
    """Stable digest of everything that determines a completion."""
    payload = {
        "model_id": endpoint.model_id,
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
        "seed": endpoint.seed,
        "messages": [[m.role, m.content] for m in messages],
    }
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def send(self, endpoint: ModelEndpoint, messages: list[ChatMessage]) -> str: ...


class HttpBackend:
    """OpenAI-compatible chat-completions over HTTPS."""

    def __init__(self, timeout: float = 120.0, transport=None):
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def send(self, endpoint: ModelEndpoint, messages: list[ChatMessage]) -> str:
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env)
            if not key:
                raise AuthenticationError(
                    f"environment variable {endpoint.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": endpoint.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
        }
        if endpoint.seed is not None:
            body["seed"] = endpoint.seed
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._client.post(url, headers=headers, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"{endpoint.name}: {exc}") from exc
        if response.status_code in _AUTH_STATUSES:
            raise AuthenticationError(f"{endpoint.name}: HTTP {response.status_code}")
        if response.status_code in _RETRYABLE_STATUSES:
            raise TransportError(f"{endpoint.name}: HTTP {response.status_code}")
        if response.status_code != 200:
            raise GatewayError(f"{endpoint.name}: HTTP {response.status_code}: {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError(f"{endpoint.name}: malformed completion payload") from exc

    def close(self):
        self._client.close()


Matcher = Callable[[ModelEndpoint, list[ChatMessage]], bool]
# a script step yields text (possibly computed from the request), raises the
# given error, or steps through a list of those
ScriptResponse = Union[str, Exception, Callable, list]


class MockBackend:
    """Closed-world scripted backend: every reply is registered up front.

    Scripts are (matcher, response) pairs checked in registration order.
    A response may be a list, consumed one element per call, to script
    transient failures (elements that are exceptions are raised), or a
    callable (endpoint, messages) -> text.
    """

    def __init__(self):
        self._scripts: list[dict] = []
        self._lock = threading.Lock()
        self.calls = 0

    def register(self, matcher: Matcher, response: ScriptResponse) -> None:
        queue = list(response) if isinstance(response, list) else None
        self._scripts.append({"matcher": matcher, "response": response, "queue": queue})

    def send(self, endpoint: ModelEndpoint, messages: list[ChatMessage]) -> str:
        with self._lock:
            self.calls += 1
            for script in self._scripts:
                if not script["matcher"](endpoint, messages):
                    continue
                if script["queue"] is not None:
                    # consume the sequence; the last element repeats
                    item = script["queue"].pop(0) if len(script["queue"]) > 1 else script["queue"][0]
                else:
                    item = script["response"]
                if isinstance(item, Exception):
                    raise item
                if callable(item):
                    return item(endpoint, messages)
                return item
        preview = messages[-1].content[:120] if messages else "<no messages>"
        raise UnscriptedCallError(
            f"unscripted call to endpoint {endpoint.name!r}: {preview!r}"
        )

    @classmethod
    def from_script_file(cls, path) -> "MockBackend":
        """Build a mock from a JSON list of matcher/response entries.

        Each entry may set "endpoint" (role name must match), "contains"
        (substring, or list of substrings, of the concatenated message
        contents), and exactly one of "response" (text) or "error"
        ("transport" or "auth", optionally a list under "errors_then" for
        fail-then-succeed sequences).
        """
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise GatewayError(f"mock script {path} must be a JSON list")
        mock = cls()
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                raise GatewayError(f"mock script {path}: entry {i} must be an object")
            mock.register(_entry_matcher(entry), _entry_response(entry, i, path))
        return mock


def _entry_matcher(entry: dict) -> Matcher:
    endpoint_name = entry.get("endpoint")
    contains = entry.get("contains", [])
    if isinstance(contains, str):
        contains = [contains]

    def matcher(endpoint: ModelEndpoint, messages: list[ChatMessage]) -> bool:
        if endpoint_name is not None and endpoint.name != endpoint_name:
            return False
        text = "\n".join(m.content for m in messages)
        return all(needle in text for needle in contains)

    return matcher


def _entry_response(entry: dict, index: int, path) -> ScriptResponse:
    if "response" in entry:
        response = entry["response"]
        if entry.get("fail_times"):
            failures = [TransportError("scripted transient failure")] * int(entry["fail_times"])
            return failures + [response]
        return response
    if "error" in entry:
        kind = entry["error"]
        if kind == "transport":
            return TransportError("scripted transport error")
        if kind == "auth":
            return AuthenticationError("scripted auth error")
        return GatewayError(f"scripted error: {kind}")
    raise GatewayError(f"mock script {path}: entry {index} needs 'response' or 'error'")


def register_script(mock: MockBackend, matcher: Matcher, response: ScriptResponse) -> None:
    """Register a scripted reply; earlier registrations win on overlap."""
    mock.register(matcher, response)


class TranscriptStore:
    """Append-only JSONL log of every live completion."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    @staticmethod
    def load_responses(path) -> dict[str, str]:
        """digest -> response text, last entry wins."""
        responses: dict[str, str] = {}
        with Path(path).open(encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    entry = json.loads(line)
                    responses[entry["digest"]] = entry["response"]
        return responses


class ReplayBackend:
    """Serve completions from a previously captured transcript."""

    def __init__(self, responses: dict[str, str]):
        self._responses = responses

    @classmethod
    def from_transcript(cls, path) -> "ReplayBackend":
        return cls(TranscriptStore.load_responses(path))

    def send(self, endpoint: ModelEndpoint, messages: list[ChatMessage]) -> str:
        digest = cache_key(endpoint, messages)
        try:
            return self._responses[digest]
        except KeyError:
            raise GatewayError(
                f"transcript has no completion for endpoint {endpoint.name!r} (digest {digest[:12]})"
            ) from None


class LlmGateway:
    """complete() with retries, caching, transcripts, bounded concurrency."""

    def __init__(
        self,
        backend: Backend,
        cache_dir=None,
        transcript_path=None,
        retry_limit: int = 3,
        retry_base_delay: float = 0.5,
        concurrency_limit: int = 4,
    ):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.transcript = TranscriptStore(transcript_path) if transcript_path else None
        self.retry_limit = retry_limit
        self.retry_base_delay = retry_base_delay
        self.concurrency_limit = concurrency_limit
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._lock = threading.Lock()
        self._completions_issued = 0

    @property
    def completions_issued(self) -> int:
        """Number of live (non-cached) completions since construction."""
        with self._lock:
            return self._completions_issued

    def complete(self, endpoint: ModelEndpoint, messages: list[ChatMessage]) -> CompletionResult:
        if not messages:
            raise GatewayError("messages must be non-empty")
        digest = cache_key(endpoint, messages)
        cached = self._cache_read(digest)
        if cached is not None:
            return CompletionResult(
                text=cached, prompt_digest=digest, latency=0.0, attempt_count=1, from_cache=True
            )
        semaphore = self._semaphore_for(endpoint.name)
        with semaphore:
            started = time.monotonic()
            text, attempts = self._send_with_retries(endpoint, messages)
            latency = time.monotonic() - started
        with self._lock:
            self._completions_issued += 1
        if self.transcript:
            self.transcript.append(
                {
                    "digest": digest,
                    "endpoint": endpoint.name,
                    "model_id": endpoint.model_id,
                    "request": {
                        "messages": [{"role": m.role, "content": m.content} for m in messages],
                        "temperature": endpoint.temperature,
                        "max_tokens": endpoint.max_tokens,
                        "seed": endpoint.seed,
                    },
                    "response": text,
                    "latency_s": round(latency, 6),
                    "attempt_count": attempts,
                    "created_at": time.time(),
                }
            )
        self._cache_write(digest, text)
        return CompletionResult(
            text=text, prompt_digest=digest, latency=latency, attempt_count=attempts, from_cache=False
        )

    def _send_with_retries(self, endpoint, messages) -> tuple[str, int]:
        attempts = 0
        while True:
            attempts += 1
            try:
                return self.backend.send(endpoint, messages), attempts
            except TransportError as exc:
                if attempts > self.retry_limit:
                    raise TransportError(
                        f"{endpoint.name}: retries exhausted after {attempts} attempts: {exc}"
                    ) from exc
                delay = self.retry_base_delay * (2 ** (attempts - 1))
                delay *= 1.0 + random.random() * 0.25  # jitter
                logger.warning(
                    "transient failure on %s (attempt %d/%d), retrying in %.2fs",
                    endpoint.name, attempts, self.retry_limit + 1, delay,
                )
                if delay > 0:
                    time.sleep(delay)

    def _semaphore_for(self, name: str) -> threading.Semaphore:
        with self._lock:
            if name not in self._semaphores:
                self._semaphores[name] = threading.Semaphore(self.concurrency_limit)
            return self._semaphores[name]

    def _cache_read(self, digest: str):
        if not self.cache_dir:
            return None
        path = self.cache_dir / f"{digest}.json"
        try:
            return json.loads(path.read_text(encoding="utf-8"))["text"]
        except FileNotFoundError:
            return None

    def _cache_write(self, digest: str, text: str) -> None:
        if not self.cache_dir:
            return
        path = self.cache_dir / f"{digest}.json"
        payload = json.dumps({"text": text}, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
