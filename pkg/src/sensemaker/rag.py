"""Retrieval-augmented baseline: textualize records, embed, retrieve, answer.

The index is a flat exact-scan over unit-norm vectors (cosine similarity by
dot product), so retrieval is reproducible and checkable against a
brute-force oracle. The default embedder is a deterministic lexical one
(hashed token counts, L2-normalized); a remote embedding endpoint can be
plugged in instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .helpers import pair_app_usage, pair_state_blocks
from .llm import Backend, ChatMessage, ChatRequest
from .store import SensorStore
from .streams import StreamKind
from .textnum import ungrounded_tokens
from .timeutil import TimeRange, format_instant

INDEX_FORMAT_VERSION = 1


class RagError(Exception):
    pass


@dataclass(frozen=True)
class TextChunk:
    """Natural-language rendering of one (user, stream, window) of records."""

    text: str
    user_id: str
    stream: StreamKind
    range: TimeRange

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("chunk text must be non-empty")

    def to_dict(self) -> dict:
        return {"text": self.text, "user_id": self.user_id,
                "stream": self.stream.value,
                "start": self.range.start, "end": self.range.end}


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class LexicalEmbedder:
    """Deterministic bag-of-words embedding: hashed token counts, unit norm."""

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("dimension must be positive")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise RagError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.sha1(token.encode("utf-8")).digest()
            slot = int.from_bytes(digest[:8], "big") % self.dim
            vec[slot] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise RagError(f"text has no embeddable tokens: {text!r}")
        return vec / norm


class RemoteEmbedder:
    """OpenAI-compatible /embeddings endpoint; vectors are re-normalized."""

    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None,
                 timeout: float = 60.0):
        import httpx
        self.base_url = base_url.rstrip("/")
        self.model = model
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)
        self.dim: Optional[int] = None

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise RagError("cannot embed empty text")
        resp = self._client.post(f"{self.base_url}/embeddings",
                                 json={"model": self.model, "input": text})
        resp.raise_for_status()
        vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        if self.dim is None:
            self.dim = int(vec.shape[0])
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise RagError("endpoint returned a zero vector")
        return vec / norm


@dataclass
class ScoredChunk:
    chunk_id: int
    chunk: TextChunk
    score: float


class VectorIndex:
    """Flat exact-scan index; ties broken by insertion order."""

    def __init__(self, embedder):
        self.embedder = embedder
        self.chunks: list[TextChunk] = []
        self._vectors: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.chunks)

    def add(self, chunk: TextChunk) -> int:
        self.chunks.append(chunk)
        self._vectors.append(self.embedder.embed(chunk.text))
        return len(self.chunks) - 1

    def retrieve(self, query_text: str, k: int) -> list[ScoredChunk]:
        """Exact top-k by cosine similarity, descending; k > size returns all.

        Ranking uses scores quantized to 12 decimals so that mathematically
        equal cosines tie (and fall back to insertion order) regardless of
        float summation order.
        """
        if not self.chunks:
            raise RagError("index is empty")
        if k <= 0:
            raise RagError("k must be positive")
        q = self.embedder.embed(query_text)
        matrix = np.stack(self._vectors)
        scores = matrix @ q
        ranking = np.round(scores, 12)
        order = np.argsort(-ranking, kind="stable")[: min(k, len(self.chunks))]
        return [ScoredChunk(int(i), self.chunks[int(i)], float(scores[int(i)]))
                for i in order]

    # persistence: chunk metadata paired with full-precision vectors
    def save(self, path) -> None:
        payload = {
            "version": INDEX_FORMAT_VERSION,
            "dim": getattr(self.embedder, "dim", None),
            "chunks": [c.to_dict() for c in self.chunks],
            "vectors": [v.tolist() for v in self._vectors],
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path, embedder) -> "VectorIndex":
        payload = json.loads(Path(path).read_text())
        if payload.get("version") != INDEX_FORMAT_VERSION:
            raise RagError(f"unsupported index version {payload.get('version')!r}")
        index = cls(embedder)
        for meta, vec in zip(payload["chunks"], payload["vectors"]):
            index.chunks.append(TextChunk(
                meta["text"], meta["user_id"], StreamKind(meta["stream"]),
                TimeRange(meta["start"], meta["end"])))
            index._vectors.append(np.asarray(vec, dtype=np.float64))
        return index


# -- textualization -----------------------------------------------------------


def _fmt_num(value: float) -> str:
    return f"{value:g}"


INTERVAL_STREAMS = (StreamKind.APP_USAGE, StreamKind.WIFI,
                    StreamKind.ACTIVITY, StreamKind.LOCK_UNLOCK)


def textualize(store: SensorStore, user_id: str, span: TimeRange,
               window: float = 3600.0, tz: Optional[str] = None) -> list[TextChunk]:
    """Deterministic per-stream natural-language chunks, one per non-empty window.

    Interval-shaped streams are paired over the whole range first so blocks
    crossing a window boundary keep their true duration; each block's
    sentence lands in the window containing its start.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    tz = tz if tz is not None else store.tz
    count = max(1, math.ceil(span.duration / window)) if span.duration else 0

    def window_index(epoch: float) -> int:
        return min(int((epoch - span.start) // window), count - 1)

    buckets: dict[tuple[int, StreamKind], list[str]] = {}

    def put(epoch: float, stream: StreamKind, line: str) -> None:
        buckets.setdefault((window_index(epoch), stream), []).append(line)

    for stream in INTERVAL_STREAMS:
        records = store.query_records(user_id, stream, span)
        for epoch, line in _interval_lines(stream, records, span, tz):
            put(epoch, stream, line)
    for stream in StreamKind:
        if stream in INTERVAL_STREAMS:
            continue
        records = store.query_records(user_id, stream, span)
        if not records:
            continue
        grouped: dict[int, list] = {}
        for rec in records:
            grouped.setdefault(window_index(rec.timestamp), []).append(rec)
        for idx, recs in grouped.items():
            sub = _sub_range(span, window, idx, count)
            for line in _sample_lines(stream, recs, sub, tz):
                buckets.setdefault((idx, stream), []).append(line)

    chunks: list[TextChunk] = []
    for idx in range(count):
        sub = _sub_range(span, window, idx, count)
        for stream in StreamKind:
            lines = buckets.get((idx, stream))
            if lines:
                chunks.append(TextChunk("\n".join(lines), user_id, stream, sub))
    return chunks


def _sub_range(span: TimeRange, window: float, idx: int, count: int) -> TimeRange:
    start = span.start + idx * window
    end = span.end if idx == count - 1 else min(start + window, span.end)
    return TimeRange(start, end)


def _interval_lines(stream: StreamKind, records, rng: TimeRange, tz: str):
    """(block start epoch, sentence) pairs for the interval-shaped streams."""
    t = lambda epoch: format_instant(epoch, tz)
    if stream is StreamKind.APP_USAGE:
        from .timeutil import parse_instant
        for b in pair_app_usage(records, rng, tz):
            yield parse_instant(b["open"], tz), (
                f"Between {b['open']} and {b['close']}, the user used "
                f"{b['app']} for {_fmt_num(b['duration'])} seconds.")
        return
    if stream is StreamKind.WIFI:
        events = [(r.timestamp,
                   ("connected", r.payload.get("ssid")) if r.payload["connected"]
                   else ("not_connected", None)) for r in records]
        for b in pair_state_blocks(events, rng):
            status, ssid = b["state"]
            if status == "connected":
                line = (f"Between {t(b['start'])} and {t(b['end'])}, the phone "
                        f"was connected to the Wi-Fi network '{ssid}'.")
            else:
                line = (f"Between {t(b['start'])} and {t(b['end'])}, the phone "
                        f"was not connected to any Wi-Fi network.")
            yield b["start"], line
        return
    if stream is StreamKind.ACTIVITY:
        events = [(r.timestamp, r.payload["kind"]) for r in records]
        for b in pair_state_blocks(events, rng):
            yield b["start"], (f"From {t(b['start'])} to {t(b['end'])}, the "
                               f"user's detected activity was {b['state']}.")
        return
    if stream is StreamKind.LOCK_UNLOCK:
        events = [(r.timestamp,
                   "locked" if r.payload["event"] == "lock" else "unlocked")
                  for r in records]
        for b in pair_state_blocks(events, rng):
            yield b["start"], (f"From {t(b['start'])} to {t(b['end'])}, the "
                               f"phone stayed {b['state']}.")


def _sample_lines(stream: StreamKind, records, sub: TimeRange, tz: str) -> list[str]:
    t = lambda epoch: format_instant(epoch, tz)
    if stream is StreamKind.LOCATION:
        lat = sum(r.payload["latitude"] for r in records) / len(records)
        lon = sum(r.payload["longitude"] for r in records) / len(records)
        return [f"Between {t(sub.start)} and {t(sub.end)}, {len(records)} GPS "
                f"samples were recorded around latitude {lat:.4f}, longitude "
                f"{lon:.4f}."]
    if stream is StreamKind.PHONE_STEPS:
        steps = sum(r.payload["steps"] for r in records)
        distance = sum(r.payload["distance"] for r in records)
        floors_up = sum(r.payload["floors_up"] for r in records)
        floors_down = sum(r.payload["floors_down"] for r in records)
        return [f"Between {t(sub.start)} and {t(sub.end)}, the phone recorded "
                f"{steps} steps over {_fmt_num(distance)} meters, with "
                f"{floors_up} floors climbed and {floors_down} descended."]
    if stream is StreamKind.CALL_LOGS:
        lines = []
        for r in records:
            article = "an" if r.payload["direction"].startswith(("i", "o")) else "a"
            lines.append(f"At {t(r.timestamp)}, there was {article} "
                         f"{r.payload['direction']} call lasting "
                         f"{_fmt_num(r.payload['duration'])} seconds.")
        return lines
    if stream is StreamKind.BATTERY:
        return [f"At {t(r.timestamp)}, the battery was at "
                f"{_fmt_num(r.payload['level'])}% and {r.payload['state']}."
                for r in records]
    if stream is StreamKind.GARMIN_STEPS:
        steps = sum(r.payload["steps"] for r in records)
        return [f"Between {t(sub.start)} and {t(sub.end)}, the Garmin watch "
                f"recorded {steps} steps."]
    if stream is StreamKind.GARMIN_HEART_RATE:
        bpm = [r.payload["bpm"] for r in records]
        return [f"Between {t(sub.start)} and {t(sub.end)}, heart rate ranged "
                f"from {_fmt_num(min(bpm))} to {_fmt_num(max(bpm))} bpm over "
                f"{len(bpm)} samples."]
    if stream is StreamKind.STRESS_PREDICTION:
        probs = [r.payload["probability"] for r in records]
        mean = sum(probs) / len(probs)
        return [f"Between {t(sub.start)} and {t(sub.end)}, predicted stress "
                f"probability averaged {mean:.2f} over {len(probs)} samples "
                f"(near 1 means more stressed)."]
    return []


# -- the pipeline ---------------------------------------------------------------


@dataclass
class RagAnswer:
    text: str
    chunk_ids: list[int]
    ungrounded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"text": self.text, "chunk_ids": list(self.chunk_ids),
                "ungrounded": list(self.ungrounded)}


RAG_PROMPT = (
    "You are answering a question about one user's passive sensing data. "
    "Use only the context passages below; if they do not contain the answer, "
    "say that the data does not show it.\n\nContext:\n{context}\n\n"
    "Question: {query}\n\nAnswer concisely.")

NO_DATA_ANSWER = ("No sensing data is available for this user and time range, "
                  "so the question cannot be answered from the data.")


class RagPipeline:
    """Textualize -> index -> retrieve -> single completion."""

    def __init__(self, store: SensorStore, backend: Backend,
                 embedder=None, model: str = "gpt-4o",
                 window: float = 3600.0, k: int = 8,
                 temperature: float = 1.0, top_p: float = 1.0):
        self.store = store
        self.backend = backend
        self.embedder = embedder or LexicalEmbedder()
        self.model = model
        self.window = window
        self.k = k
        self.temperature = temperature
        self.top_p = top_p

    def build_index(self, user_id: str, span: TimeRange) -> VectorIndex:
        index = VectorIndex(self.embedder)
        for chunk in textualize(self.store, user_id, span, self.window):
            index.add(chunk)
        return index

    def answer(self, query: str, user_id: str, span: TimeRange,
               k: Optional[int] = None,
               index: Optional[VectorIndex] = None) -> RagAnswer:
        """One retrieval plus one completion; numbers are audited afterwards.

        Any number in the answer that is grounded in neither the retrieved
        context nor the query is reported in `ungrounded` (the RAG baseline
        deliberately has no retry loop, so hallucinated numbers are flagged
        for the evaluation rather than repaired).
        """
        index = index if index is not None else self.build_index(user_id, span)
        if len(index) == 0:
            return RagAnswer(NO_DATA_ANSWER, [])
        hits = index.retrieve(query, k if k is not None else self.k)
        context = "\n\n".join(f"[{h.chunk_id}] {h.chunk.text}" for h in hits)
        prompt = RAG_PROMPT.format(context=context, query=query)
        text = self.backend.complete(ChatRequest(
            self.model, (ChatMessage("user", prompt),),
            self.temperature, self.top_p)).strip()
        ungrounded = ungrounded_tokens(text, context + "\n" + query)
        return RagAnswer(text, [h.chunk_id for h in hits], ungrounded)
