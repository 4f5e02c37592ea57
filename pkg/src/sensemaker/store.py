"""Time-indexed persistence for raw sensing records.

File-backed default: one append-only JSONL log per (user, stream) plus an
in-memory index rebuilt on open. Readers are safe at any time; ingestion is
single-writer per (user, stream) and becomes visible atomically per batch.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .streams import PayloadError, SensorRecord, StreamKind, validate_payload
from .timeutil import TimeRange, parse_instant


@dataclass
class Rejection:
    line: int  # 1-based position within the ingested batch
    reason: str


@dataclass
class IngestReport:
    accepted: int = 0
    duplicates: int = 0
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.rejections)


class RecordSet(list):
    """Query result: a timestamp-sorted list plus a user-visibility indicator.

    `user_seen` distinguishes "this user has no records in the range" from
    "this user was never ingested at all", so downstream reporting can say
    which.
    """

    def __init__(self, records: Iterable[SensorRecord] = (), user_seen: bool = True):
        super().__init__(records)
        self.user_seen = user_seen


@dataclass
class StreamCoverage:
    earliest: float
    latest: float
    count: int


class SensorStore:
    """Ingests, persists, and serves sensing records for the eleven streams.

    With `data_dir=None` the store is memory-only (useful for tests); with a
    directory, accepted records are appended to
    `<data_dir>/<user>/<stream>.jsonl` and reloaded on construction.
    """

    def __init__(self, data_dir: Optional[Path] = None, tz: str = "UTC"):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.tz = tz
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], list[SensorRecord]] = {}
        self._seen_keys: set[tuple] = set()
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- ingestion --------------------------------------------------------

    def ingest_stream(self, stream: StreamKind, records: Iterable[str]) -> IngestReport:
        """Ingest raw JSONL record lines for one stream.

        Malformed lines are skipped and reported with their line number;
        exact duplicates of already-stored records are skipped silently
        (re-ingesting a file is a no-op). Accepted records become visible to
        readers only once the whole batch has been parsed.
        """
        report = IngestReport()
        parsed: list[SensorRecord] = []
        for lineno, raw in enumerate(records, start=1):
            if not raw.strip():
                continue
            try:
                parsed.append(self._parse_line(stream, raw))
            except (PayloadError, ValueError, KeyError) as exc:
                report.rejections.append(Rejection(lineno, str(exc)))
        with self._lock:
            fresh: list[SensorRecord] = []
            for rec in parsed:
                key = rec.key()
                if key in self._seen_keys:
                    report.duplicates += 1
                    continue
                self._seen_keys.add(key)
                fresh.append(rec)
            for rec in fresh:
                bucket = self._records.setdefault((rec.user_id, rec.stream.value), [])
                bucket.append(rec)
            if self.data_dir is not None:
                self._persist(fresh)
            report.accepted = len(fresh)
        return report

    def ingest_manifest(self, manifest_path: Path) -> dict[str, IngestReport]:
        """Ingest every file listed in a manifest: [{"stream": ..., "path": ...}]."""
        manifest_path = Path(manifest_path)
        entries = json.loads(manifest_path.read_text())
        if not isinstance(entries, list):
            raise ValueError("manifest must be a JSON array of {stream, path}")
        reports: dict[str, IngestReport] = {}
        for entry in entries:
            stream = StreamKind.parse(entry["stream"])
            path = Path(entry["path"])
            if not path.is_absolute():
                path = manifest_path.parent / path
            lines = path.read_text().splitlines()
            reports[f"{stream.value}:{path.name}"] = self.ingest_stream(stream, lines)
        return reports

    def _parse_line(self, stream: StreamKind, raw: str) -> SensorRecord:
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ValueError("record must be a JSON object")
        if "user_id" not in obj or not isinstance(obj["user_id"], str) or not obj["user_id"]:
            raise ValueError("missing or empty user_id")
        declared = obj.get("stream")
        if declared is not None and declared != stream.value:
            raise ValueError(f"record declares stream {declared!r}, expected {stream.value!r}")
        if "timestamp" not in obj:
            raise ValueError("missing timestamp")
        ts = parse_instant(obj["timestamp"], self.tz)
        payload = obj.get("payload")
        normalized = validate_payload(stream, payload)
        return SensorRecord(obj["user_id"], stream, ts, normalized)

    # -- queries ----------------------------------------------------------

    def query_records(self, user_id: str, stream: StreamKind, range: TimeRange) -> RecordSet:
        """Records with range.start <= timestamp < range.end, timestamp-sorted.

        Sorting is stable: records with equal timestamps keep ingestion order.
        An empty result is normal; `user_seen` is False when the user has no
        records in any stream.
        """
        with self._lock:
            bucket = list(self._records.get((user_id, stream.value), ()))
            seen = self._user_seen(user_id)
        hits = [r for r in bucket if range.contains(r.timestamp)]
        hits.sort(key=lambda r: r.timestamp)
        return RecordSet(hits, user_seen=seen)

    def user_seen(self, user_id: str) -> bool:
        with self._lock:
            return self._user_seen(user_id)

    def _user_seen(self, user_id: str) -> bool:
        return any(uid == user_id for uid, _ in self._records)

    def users(self) -> list[str]:
        with self._lock:
            return sorted({uid for uid, _ in self._records})

    def coverage(self, user_id: str) -> dict[StreamKind, StreamCoverage]:
        """Per-stream earliest/latest timestamps and counts; only non-empty streams appear."""
        with self._lock:
            buckets = {kind: list(recs) for (uid, kind), recs in self._records.items()
                       if uid == user_id and recs}
        report: dict[StreamKind, StreamCoverage] = {}
        for kind_value, recs in buckets.items():
            times = [r.timestamp for r in recs]
            report[StreamKind(kind_value)] = StreamCoverage(min(times), max(times), len(recs))
        return report

    # -- persistence ------------------------------------------------------

    def _persist(self, records: list[SensorRecord]) -> None:
        by_file: dict[tuple[str, str], list[SensorRecord]] = {}
        for rec in records:
            by_file.setdefault((rec.user_id, rec.stream.value), []).append(rec)
        for (user_id, kind), recs in by_file.items():
            target = self.data_dir / user_id
            target.mkdir(parents=True, exist_ok=True)
            with open(target / f"{kind}.jsonl", "a") as fh:
                for rec in recs:
                    fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    def _load(self) -> None:
        for user_dir in sorted(p for p in self.data_dir.iterdir() if p.is_dir()):
            for log in sorted(user_dir.glob("*.jsonl")):
                try:
                    stream = StreamKind(log.stem)
                except ValueError:
                    continue
                for raw in log.read_text().splitlines():
                    if not raw.strip():
                        continue
                    obj = json.loads(raw)
                    rec = SensorRecord(obj["user_id"], stream,
                                       float(obj["timestamp"]), obj["payload"])
                    key = rec.key()
                    if key in self._seen_keys:
                        continue
                    self._seen_keys.add(key)
                    self._records.setdefault((rec.user_id, stream.value), []).append(rec)
