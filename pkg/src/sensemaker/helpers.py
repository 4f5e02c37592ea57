"""Prebuilt data retrieval and processing functions exposed to generated code.

Each helper carries a prompt-injectable spec (name, description, parameters,
returns, example outputs) and a set of stream tags used for keyword-based
relevance selection against free-text information requests.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from .store import SensorStore
from .streams import SensorRecord, StreamKind
from .timeutil import TimeRange, format_instant, parse_instant


class HelperError(Exception):
    pass


class DuplicateHelperError(HelperError):
    pass


class UnknownHelperError(HelperError):
    pass


@dataclass(frozen=True)
class HelperParam:
    name: str
    semantic_type: str
    description: str


@dataclass(frozen=True)
class HelperSpec:
    name: str
    description: str
    parameters: tuple[HelperParam, ...]
    returns: str
    examples: tuple[str, ...]
    stream_tags: frozenset[StreamKind]

    def __post_init__(self):
        if not self.name.isidentifier():
            raise ValueError(f"helper name {self.name!r} is not an identifier")
        if not self.stream_tags:
            raise ValueError(f"helper {self.name!r} must tag at least one stream")
        declared = {p.name for p in self.parameters}
        referenced = set(re.findall(r"`(\w+)`", self.description))
        undeclared = referenced - declared
        if undeclared:
            raise ValueError(f"helper {self.name!r} description references "
                             f"undeclared parameters {sorted(undeclared)}")

    def render(self) -> str:
        """Prompt block: Name / Description / Parameters / Returns / Example."""
        lines = [f"Name: {self.name}", "", f"Description: {self.description}", ""]
        lines.append("Parameters:")
        for p in self.parameters:
            lines.append(f"- {p.name} ({p.semantic_type}): {p.description}")
        lines += ["", f"Returns: {self.returns}"]
        if self.examples:
            lines += ["", "Example:"]
            lines += [f"- {ex}" for ex in self.examples]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [vars(p) for p in self.parameters],
            "returns": self.returns,
            "examples": list(self.examples),
            "stream_tags": sorted(t.value for t in self.stream_tags),
        }


# Keyword lexicon mapping request vocabulary onto streams. Matching is by
# whole word (case-insensitive); multi-word terms match as phrases.
STREAM_LEXICON: dict[StreamKind, tuple[str, ...]] = {
    StreamKind.LOCATION: (
        "location", "locations", "gps", "latitude", "longitude", "altitude",
        "coordinate", "coordinates", "displacement", "travel", "traveled",
        "travelled", "mobility", "place", "places"),
    StreamKind.ACTIVITY: (
        "activity", "activities", "stationary", "walking", "walk", "walked",
        "running", "ran", "cycling", "cycled", "automotive", "driving", "drove",
        "exercise", "exercising", "commute", "commuting"),
    StreamKind.APP_USAGE: (
        "app", "apps", "application", "applications", "app usage",
        "screen time", "social media"),
    StreamKind.PHONE_STEPS: (
        "steps", "step", "step count", "step counts", "floors", "floor",
        "climbed", "ascended", "descended", "distance"),
    StreamKind.LOCK_UNLOCK: (
        "lock", "locked", "unlock", "unlocked", "pickup", "pickups",
        "phone usage"),
    StreamKind.WIFI: (
        "wifi", "wi-fi", "wireless", "ssid", "network", "networks"),
    StreamKind.CALL_LOGS: (
        "call", "calls", "called", "calling", "dialed", "incoming",
        "outgoing", "missed call", "missed calls", "phone call",
        "phone calls"),
    StreamKind.BATTERY: (
        "battery", "charging", "charge", "charged", "discharging"),
    StreamKind.GARMIN_STEPS: (
        "garmin steps", "watch steps", "steps", "step"),
    StreamKind.GARMIN_HEART_RATE: (
        "heart rate", "heart", "bpm", "pulse"),
    StreamKind.STRESS_PREDICTION: (
        "stress", "stressed", "stress level", "stress levels",
        "stress prediction", "stress predictions"),
}


def streams_mentioned(text: str) -> set[StreamKind]:
    """Streams whose lexicon terms occur (as whole words/phrases) in the text."""
    lowered = text.lower()
    found: set[StreamKind] = set()
    for kind, terms in STREAM_LEXICON.items():
        for term in terms:
            if re.search(rf"(?<!\w){re.escape(term)}(?!\w)", lowered):
                found.add(kind)
                break
    return found


@dataclass
class Selection:
    """Result of relevance selection; empty means no helper covers the request."""

    specs: list[HelperSpec] = field(default_factory=list)
    matched_streams: set[StreamKind] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.specs)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]


class HelperRegistry:
    """Registration-ordered registry of helper specs and their implementations."""

    def __init__(self):
        self._entries: dict[str, tuple[HelperSpec, Callable]] = {}

    def register(self, spec: HelperSpec, implementation: Callable) -> str:
        if spec.name in self._entries:
            raise DuplicateHelperError(f"helper {spec.name!r} already registered")
        self._entries[spec.name] = (spec, implementation)
        return spec.name

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def spec(self, name: str) -> HelperSpec:
        try:
            return self._entries[name][0]
        except KeyError:
            raise UnknownHelperError(f"no helper named {name!r}") from None

    def call(self, name: str, **kwargs) -> Any:
        if name not in self._entries:
            raise UnknownHelperError(f"no helper named {name!r}")
        return self._entries[name][1](**kwargs)

    def describe(self, selection: Optional[Iterable[str]] = None) -> str:
        """Prompt-ready text for the selected helpers, in registration order."""
        if selection is None:
            chosen = set(self._entries)
        else:
            chosen = set(selection)
            for name in chosen:
                if name not in self._entries:
                    raise UnknownHelperError(f"no helper named {name!r}")
        blocks = [spec.render() for name, (spec, _) in self._entries.items()
                  if name in chosen]
        return "\n\n---\n\n".join(blocks)

    def select_relevant(self, request_text: str,
                        extra_streams: Iterable[StreamKind] = ()) -> Selection:
        """Helpers whose stream tags intersect the streams the request mentions.

        Over-selection is harmless (the code-generation prompt carries full
        specs); an empty selection signals that no database covers the
        request.
        """
        if not self._entries:
            raise HelperError("registry is empty")
        streams = streams_mentioned(request_text) | set(extra_streams)
        specs = [spec for spec, _ in self._entries.values()
                 if spec.stream_tags & streams]
        return Selection(specs, streams)


# -- event pairing ---------------------------------------------------------


def pair_app_usage(events: Sequence[SensorRecord], range: TimeRange,
                   tz: str = "UTC") -> list[dict]:
    """Pair open/close events into per-app usage blocks.

    A block is included iff its open falls inside the range. An open without
    a matching close is closed at min(range end, next open of the same app)
    and flagged synthetic. Close events with no preceding open are ignored.
    """
    blocks: list[dict] = []
    pending: dict[str, float] = {}  # app -> open timestamp

    def close_block(app: str, open_ts: float, close_ts: float, synthetic: bool):
        blocks.append({
            "app": app,
            "open": format_instant(open_ts, tz),
            "close": format_instant(close_ts, tz),
            "duration": float(close_ts - open_ts),
            "synthetic_close": synthetic,
        })

    for rec in events:
        app = rec.payload["app_name"]
        if rec.payload["event"] == "open":
            if app in pending:
                close_block(app, pending.pop(app),
                            min(rec.timestamp, range.end), True)
            if range.contains(rec.timestamp):
                pending[app] = rec.timestamp
        else:
            if app in pending:
                close_block(app, pending.pop(app), rec.timestamp, False)
    for app, open_ts in pending.items():
        close_block(app, open_ts, range.end, True)
    blocks.sort(key=lambda b: (b["open"], b["app"]))
    return blocks


def pair_state_blocks(events: Sequence[tuple[float, Any]], range: TimeRange) -> list[dict]:
    """Turn a sorted (timestamp, state) sequence into [start, end) state blocks.

    Each event starts a block that the next event closes; the final block is
    synthetically closed at the range end and dropped if empty. Consecutive
    events with equal state are merged.
    """
    merged: list[tuple[float, Any]] = []
    for ts, state in events:
        if merged and merged[-1][1] == state:
            continue
        merged.append((ts, state))
    blocks = []
    for i, (ts, state) in enumerate(merged):
        if i + 1 < len(merged):
            end, synthetic = merged[i + 1][0], False
        else:
            end, synthetic = range.end, True
        if end <= ts and synthetic:
            continue
        blocks.append({"state": state, "start": ts, "end": end,
                       "duration": float(end - ts), "synthetic_close": synthetic})
    return blocks


# -- stress predictor -------------------------------------------------------


@dataclass
class StressWindow:
    """A window of heart-rate samples handed to the stress predictor."""

    times: list[float]
    bpm: list[float]

    def __post_init__(self):
        if len(self.times) != len(self.bpm):
            raise ValueError("times and bpm must have equal length")


def _placeholder_stress(window: StressWindow) -> float:
    # Placeholder model: logistic((mean_bpm - 70) / 10). Substitute a real
    # classifier through the predictor argument of predict_stress.
    mean_bpm = sum(window.bpm) / len(window.bpm)
    return 1.0 / (1.0 + math.exp(-(mean_bpm - 70.0) / 10.0))


def predict_stress(window: StressWindow,
                   predictor: Callable[[StressWindow], float] = _placeholder_stress) -> float:
    """Deterministic stress probability in [0, 1] for a non-empty window."""
    if not window.bpm:
        raise ValueError("stress prediction requires a non-empty window")
    prob = predictor(window)
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"predictor returned {prob}, outside [0, 1]")
    return prob


# -- built-in helper family --------------------------------------------------


def _p(name: str, semantic_type: str, description: str) -> HelperParam:
    return HelperParam(name, semantic_type, description)


_UID = _p("uid", "string", "Identifier of the user whose data is fetched.")
_START = _p("start_time", "string",
            "Start of the time range, as 'YYYY-MM-DD HH:MM:SS' or epoch seconds.")
_END = _p("end_time", "string",
          "End of the time range (exclusive), same formats as start_time.")


def build_default_registry(store: SensorStore, tz: Optional[str] = None,
                           stress_predictor: Callable[[StressWindow], float] = _placeholder_stress,
                           ) -> HelperRegistry:
    """Registry with one retrieval helper per stream plus the stress predictor."""
    tz = tz if tz is not None else store.tz
    registry = HelperRegistry()

    def rng(start_time, end_time) -> TimeRange:
        return TimeRange(parse_instant(start_time, tz), parse_instant(end_time, tz))

    def fetch(uid: str, kind: StreamKind, range: TimeRange) -> list[SensorRecord]:
        return store.query_records(uid, kind, range)

    def when(rec: SensorRecord) -> str:
        return format_instant(rec.timestamp, tz)

    def state_rows(uid, kind, start_time, end_time, to_state, describe_state):
        window = rng(start_time, end_time)
        events = [(r.timestamp, to_state(r)) for r in fetch(uid, kind, window)]
        rows = []
        for block in pair_state_blocks(events, window):
            row = describe_state(block["state"])
            row.update(start=format_instant(block["start"], tz),
                       end=format_instant(block["end"], tz),
                       duration=block["duration"],
                       synthetic_close=block["synthetic_close"])
            rows.append(row)
        return rows

    # app usage ----------------------------------------------------------
    def get_app_usage_blocks(uid, start_time, end_time):
        window = rng(start_time, end_time)
        events = fetch(uid, StreamKind.APP_USAGE, window)
        return pair_app_usage(events, window, tz)

    registry.register(HelperSpec(
        "get_app_usage_blocks",
        "Retrieves blocks of continuous app usage for one user inside a time "
        "range. Each block carries the app name, its open and close times, and "
        "the duration in seconds; a block whose close time had to be inferred "
        "is marked synthetic_close.",
        (_UID, _START, _END),
        "List of app usage blocks sorted by open time, each with app, open, "
        "close, duration (seconds), and synthetic_close.",
        ("{'app': 'Maps', 'open': '2024-05-02 08:15:21', "
         "'close': '2024-05-02 08:24:03', 'duration': 522.0, "
         "'synthetic_close': False}",),
        frozenset({StreamKind.APP_USAGE})), get_app_usage_blocks)

    # location -------------------------------------------------------------
    def get_location_points(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "latitude": r.payload["latitude"],
                 "longitude": r.payload["longitude"],
                 "altitude": r.payload["altitude"]}
                for r in fetch(uid, StreamKind.LOCATION, window)]

    registry.register(HelperSpec(
        "get_location_points",
        "Retrieves raw GPS samples (latitude, longitude, altitude) for one "
        "user inside a time range, sorted by time.",
        (_UID, _START, _END),
        "List of points, each with time, latitude, longitude, altitude.",
        ("{'time': '2024-05-02 08:15:00', 'latitude': 42.3401, "
         "'longitude': -71.0897, 'altitude': 12.5}",),
        frozenset({StreamKind.LOCATION})), get_location_points)

    # activity ------------------------------------------------------------
    def get_activity_blocks(uid, start_time, end_time):
        return state_rows(uid, StreamKind.ACTIVITY, start_time, end_time,
                          lambda r: r.payload["kind"],
                          lambda state: {"activity": state})

    registry.register(HelperSpec(
        "get_activity_blocks",
        "Retrieves contiguous activity intervals (stationary, walking, "
        "cycling, running, automotive) for one user inside a time range. Each "
        "interval starts at an activity-change event and ends at the next "
        "change (or at the range end, marked synthetic_close).",
        (_UID, _START, _END),
        "List of intervals sorted by start, each with activity, start, end, "
        "duration (seconds), and synthetic_close.",
        ("{'activity': 'walking', 'start': '2024-05-02 08:02:10', "
         "'end': '2024-05-02 08:17:45', 'duration': 935.0, "
         "'synthetic_close': False}",),
        frozenset({StreamKind.ACTIVITY})), get_activity_blocks)

    # phone steps -----------------------------------------------------------
    def get_phone_step_counts(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "steps": r.payload["steps"],
                 "distance": r.payload["distance"],
                 "floors_up": r.payload["floors_up"],
                 "floors_down": r.payload["floors_down"]}
                for r in fetch(uid, StreamKind.PHONE_STEPS, window)]

    registry.register(HelperSpec(
        "get_phone_step_counts",
        "Retrieves per-sample phone step readings for one user inside a time "
        "range: step count, distance in meters, and floors ascended/descended "
        "since the previous sample.",
        (_UID, _START, _END),
        "List of samples sorted by time, each with time, steps, distance, "
        "floors_up, floors_down.",
        ("{'time': '2024-05-02 09:00:00', 'steps': 54, 'distance': 41.2, "
         "'floors_up': 0, 'floors_down': 1}",),
        frozenset({StreamKind.PHONE_STEPS})), get_phone_step_counts)

    # lock/unlock -----------------------------------------------------------
    def get_lock_unlock_blocks(uid, start_time, end_time):
        return state_rows(uid, StreamKind.LOCK_UNLOCK, start_time, end_time,
                          lambda r: "locked" if r.payload["event"] == "lock" else "unlocked",
                          lambda state: {"state": state})

    registry.register(HelperSpec(
        "get_lock_unlock_blocks",
        "Retrieves intervals during which the phone stayed locked or unlocked "
        "for one user inside a time range, derived from lock/unlock events.",
        (_UID, _START, _END),
        "List of intervals sorted by start, each with state ('locked' or "
        "'unlocked'), start, end, duration (seconds), and synthetic_close.",
        ("{'state': 'unlocked', 'start': '2024-05-02 12:30:05', "
         "'end': '2024-05-02 12:41:56', 'duration': 711.0, "
         "'synthetic_close': False}",),
        frozenset({StreamKind.LOCK_UNLOCK})), get_lock_unlock_blocks)

    # wifi -------------------------------------------------------------------
    def get_wifi_connection_blocks(uid, start_time, end_time):
        def to_state(r):
            if r.payload["connected"]:
                return ("connected", r.payload.get("ssid"))
            return ("not_connected", None)

        def describe(state):
            status, ssid = state
            return {"status": status, "ssid": ssid}

        return state_rows(uid, StreamKind.WIFI, start_time, end_time,
                          to_state, describe)

    registry.register(HelperSpec(
        "get_wifi_connection_blocks",
        "Retrieves Wi-Fi connectivity intervals for one user inside a time "
        "range. status is 'connected' (with the network name in ssid) or "
        "'not_connected' (ssid is null); 'not_connected' is a connectivity "
        "state, never a network name.",
        (_UID, _START, _END),
        "List of intervals sorted by start, each with status, ssid, start, "
        "end, duration (seconds), and synthetic_close.",
        ("{'status': 'connected', 'ssid': 'home-net', "
         "'start': '2024-05-02 18:00:00', 'end': '2024-05-02 21:14:00', "
         "'duration': 11640.0, 'synthetic_close': False}",),
        frozenset({StreamKind.WIFI})), get_wifi_connection_blocks)

    # call logs ---------------------------------------------------------------
    def get_call_log_entries(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "direction": r.payload["direction"],
                 "duration": r.payload["duration"]}
                for r in fetch(uid, StreamKind.CALL_LOGS, window)]

    registry.register(HelperSpec(
        "get_call_log_entries",
        "Retrieves call log entries (incoming, outgoing, missed) with call "
        "durations in seconds for one user inside a time range.",
        (_UID, _START, _END),
        "List of entries sorted by time, each with time, direction, duration.",
        ("{'time': '2024-05-02 14:03:11', 'direction': 'outgoing', "
         "'duration': 182.0}",),
        frozenset({StreamKind.CALL_LOGS})), get_call_log_entries)

    # battery ------------------------------------------------------------------
    def get_battery_events(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "level": r.payload["level"],
                 "state": r.payload["state"]}
                for r in fetch(uid, StreamKind.BATTERY, window)]

    registry.register(HelperSpec(
        "get_battery_events",
        "Retrieves battery status changes (level percentage plus charging, "
        "discharging, or full) for one user inside a time range.",
        (_UID, _START, _END),
        "List of events sorted by time, each with time, level, state.",
        ("{'time': '2024-05-02 22:10:44', 'level': 81.0, 'state': 'charging'}",),
        frozenset({StreamKind.BATTERY})), get_battery_events)

    # garmin steps ---------------------------------------------------------------
    def get_garmin_step_counts(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "steps": r.payload["steps"]}
                for r in fetch(uid, StreamKind.GARMIN_STEPS, window)]

    registry.register(HelperSpec(
        "get_garmin_step_counts",
        "Retrieves per-sample step counts from the Garmin smartwatch for one "
        "user inside a time range.",
        (_UID, _START, _END),
        "List of samples sorted by time, each with time and steps.",
        ("{'time': '2024-05-02 09:00:00', 'steps': 61}",),
        frozenset({StreamKind.GARMIN_STEPS})), get_garmin_step_counts)

    # heart rate ------------------------------------------------------------------
    def get_heart_rate_series(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "bpm": r.payload["bpm"]}
                for r in fetch(uid, StreamKind.GARMIN_HEART_RATE, window)]

    registry.register(HelperSpec(
        "get_heart_rate_series",
        "Retrieves the heart-rate series in beats per minute (bpm) from the "
        "Garmin smartwatch for one user inside a time range.",
        (_UID, _START, _END),
        "List of samples sorted by time, each with time and bpm.",
        ("{'time': '2024-05-02 07:31:30', 'bpm': 64.0}",),
        frozenset({StreamKind.GARMIN_HEART_RATE})), get_heart_rate_series)

    # stress -----------------------------------------------------------------------
    def get_stress_series(uid, start_time, end_time):
        window = rng(start_time, end_time)
        return [{"time": when(r), "probability": r.payload["probability"]}
                for r in fetch(uid, StreamKind.STRESS_PREDICTION, window)]

    registry.register(HelperSpec(
        "get_stress_series",
        "Retrieves predicted physiological stress probabilities (0 = low "
        "stress, 1 = high stress) for one user inside a time range.",
        (_UID, _START, _END),
        "List of samples sorted by time, each with time and probability.",
        ("{'time': '2024-05-02 16:05:30', 'probability': 0.82}",),
        frozenset({StreamKind.STRESS_PREDICTION})), get_stress_series)

    def predict_stress_from_heart_rate(uid, start_time, end_time):
        window = rng(start_time, end_time)
        recs = fetch(uid, StreamKind.GARMIN_HEART_RATE, window)
        if not recs:
            raise HelperError(f"no heart-rate samples for {uid!r} in the given range")
        sw = StressWindow([r.timestamp for r in recs],
                          [r.payload["bpm"] for r in recs])
        return predict_stress(sw, stress_predictor)

    registry.register(HelperSpec(
        "predict_stress_from_heart_rate",
        "Runs the stress prediction model over the heart-rate samples of one "
        "user inside a time range and returns one stress probability for the "
        "whole window (0 = low stress, 1 = high stress).",
        (_UID, _START, _END),
        "A single probability between 0 and 1, e.g. 0.73.",
        ("0.7311",),
        frozenset({StreamKind.STRESS_PREDICTION, StreamKind.GARMIN_HEART_RATE})),
        predict_stress_from_heart_rate)

    return registry
