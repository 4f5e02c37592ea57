"""Chat-completion backends: remote endpoint, scripted queue, and cassette replay.

Every agent exchange flows through one Backend, so swapping in a replay
backend makes an entire engine run deterministic.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import httpx

VALID_ROLES = ("system", "user", "assistant")


class LlmError(Exception):
    pass


class RemoteBackendError(LlmError):
    pass


class ScriptedExhaustedError(LlmError):
    pass


class CassetteMissError(LlmError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 1.0
    top_p: float = 1.0

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must carry at least one message")

    def to_wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ChatRequest":
        return cls(obj["model"],
                   tuple(ChatMessage(m["role"], m["content"]) for m in obj["messages"]),
                   float(obj.get("temperature", 1.0)),
                   float(obj.get("top_p", 1.0)))


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def canonicalize(request: ChatRequest) -> dict:
    """Canonical form: whitespace-normalized contents, order-stable messages."""
    return {
        "model": request.model,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "messages": [{"role": m.role, "content": _normalize_ws(m.content)}
                     for m in request.messages],
    }


def fingerprint(request: ChatRequest) -> str:
    """Stable hash of the canonicalized request (sorted keys, compact separators)."""
    blob = json.dumps(canonicalize(request), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CassetteEntry:
    fingerprint: str
    request: dict
    response_text: str


class Cassette:
    """Ordered record of request/response exchanges, persisted as JSONL."""

    def __init__(self, entries: Optional[list[CassetteEntry]] = None):
        self.entries: list[CassetteEntry] = list(entries or [])

    def append(self, request: ChatRequest, response_text: str) -> CassetteEntry:
        entry = CassetteEntry(fingerprint(request), request.to_wire(), response_text)
        self.entries.append(entry)
        return entry

    def lookup(self, fp: str) -> Optional[str]:
        for entry in self.entries:
            if entry.fingerprint == fp:
                return entry.response_text
        return None

    def save(self, path: Union[str, Path]) -> None:
        lines = [json.dumps({"fingerprint": e.fingerprint, "request": e.request,
                             "response_text": e.response_text}, sort_keys=True)
                 for e in self.entries]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Cassette":
        entries = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            entries.append(CassetteEntry(obj["fingerprint"], obj["request"],
                                         obj["response_text"]))
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)


class Backend:
    """Interface: complete(request) -> assistant response text."""

    def complete(self, request: ChatRequest) -> str:  # pragma: no cover - interface
        raise NotImplementedError


class RemoteBackend(Backend):
    """OpenAI-compatible chat-completions endpoint with bounded retry."""

    def __init__(self, base_url: str, api_key: Optional[str] = None,
                 timeout: float = 120.0, max_attempts: int = 3,
                 client: Optional[httpx.Client] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.base_url = base_url.rstrip("/")
        self.max_attempts = max_attempts
        self._sleep = sleep
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def complete(self, request: ChatRequest) -> str:
        url = f"{self.base_url}/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            try:
                resp = self._client.post(url, json=request.to_wire())
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise httpx.HTTPStatusError(
                        f"retryable status {resp.status_code}",
                        request=resp.request, response=resp)
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                status = getattr(getattr(exc, "response", None), "status_code", None)
                retryable = isinstance(exc, httpx.TransportError) or status in (429,) \
                    or (status is not None and status >= 500)
                last_error = exc
                if not retryable or attempt == self.max_attempts - 1:
                    break
                self._sleep(0.5 * 2 ** attempt)
            except (KeyError, IndexError, ValueError) as exc:
                raise RemoteBackendError(f"malformed completion response: {exc}") from exc
        raise RemoteBackendError(f"chat completion failed: {last_error}") from last_error


class ScriptedBackend(Backend):
    """Canned responses, served in order (or computed by a responder callable)."""

    def __init__(self, script: Union[Sequence[str], Callable[[ChatRequest], str]]):
        self._lock = threading.Lock()
        self.requests: list[ChatRequest] = []
        if callable(script):
            self._responder: Optional[Callable] = script
            self._queue: list[str] = []
        else:
            self._responder = None
            self._queue = list(script)
        self._cursor = 0

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._responder is not None:
                return self._responder(request)
            if self._cursor >= len(self._queue):
                raise ScriptedExhaustedError(
                    f"scripted backend exhausted after {self._cursor} responses")
            text = self._queue[self._cursor]
            self._cursor += 1
            return text

    @property
    def remaining(self) -> int:
        return len(self._queue) - self._cursor


class ReplayBackend(Backend):
    """Serves recorded responses by request fingerprint; misses are errors."""

    def __init__(self, cassette: Union[Cassette, str, Path]):
        self.cassette = cassette if isinstance(cassette, Cassette) else Cassette.load(cassette)
        self._index = {e.fingerprint: e.response_text for e in self.cassette.entries}
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        fp = fingerprint(request)
        with self._lock:
            hit = self._index.get(fp)
        if hit is None:
            raise CassetteMissError(fp)
        return hit


class RecordingBackend(Backend):
    """Wraps another backend, appending every exchange to a cassette."""

    def __init__(self, inner: Backend, path: Optional[Union[str, Path]] = None):
        self.inner = inner
        self.path = Path(path) if path is not None else None
        self.cassette = Cassette()
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        text = self.inner.complete(request)
        with self._lock:
            self.cassette.append(request, text)
        return text

    def close(self) -> Cassette:
        if self.path is not None:
            self.cassette.save(self.path)
        return self.cassette

    def __enter__(self) -> "RecordingBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
