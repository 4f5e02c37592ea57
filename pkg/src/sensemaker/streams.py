"""Passive sensing stream kinds, per-stream payload schemas, and the stream catalog."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any


class StreamKind(str, Enum):
    """The eleven supported passive sensing streams."""

    LOCATION = "location"
    ACTIVITY = "activity"
    APP_USAGE = "app_usage"
    PHONE_STEPS = "phone_steps"
    LOCK_UNLOCK = "lock_unlock"
    WIFI = "wifi"
    CALL_LOGS = "call_logs"
    BATTERY = "battery"
    GARMIN_STEPS = "garmin_steps"
    GARMIN_HEART_RATE = "garmin_heart_rate"
    STRESS_PREDICTION = "stress_prediction"

    @classmethod
    def parse(cls, name: str) -> "StreamKind":
        try:
            return cls(name)
        except ValueError:
            raise UnknownStreamError(name) from None


class UnknownStreamError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown stream {name!r}; expected one of "
                         f"{', '.join(k.value for k in StreamKind)}")
        self.name = name


class PayloadError(ValueError):
    """A payload does not conform to its stream's schema."""


ACTIVITY_KINDS = ("stationary", "walking", "cycling", "running", "automotive")
APP_EVENTS = ("open", "close")
LOCK_EVENTS = ("lock", "unlock")
CALL_DIRECTIONS = ("incoming", "outgoing", "missed")
BATTERY_STATES = ("charging", "discharging", "full")


def _require(payload: dict, field: str, kinds: tuple) -> Any:
    if field not in payload:
        raise PayloadError(f"missing field {field!r}")
    value = payload[field]
    if not isinstance(value, kinds) or isinstance(value, bool) and bool not in kinds:
        raise PayloadError(f"field {field!r} has wrong type {type(value).__name__}")
    return value


def _number(payload: dict, field: str) -> float:
    value = _require(payload, field, (int, float))
    value = float(value)
    if not math.isfinite(value):
        raise PayloadError(f"field {field!r} must be finite")
    return value


def _count(payload: dict, field: str) -> int:
    value = _require(payload, field, (int,))
    if value < 0:
        raise PayloadError(f"field {field!r} must be >= 0")
    return value


def _choice(payload: dict, field: str, allowed: tuple) -> str:
    value = _require(payload, field, (str,))
    if value not in allowed:
        raise PayloadError(f"field {field!r} must be one of {allowed}, got {value!r}")
    return value


def _check_no_extras(payload: dict, allowed: set) -> None:
    extras = set(payload) - allowed
    if extras:
        raise PayloadError(f"unexpected fields {sorted(extras)}")


def validate_payload(stream: StreamKind, payload: Any) -> dict:
    """Validate and normalize a payload against its stream schema.

    Returns the normalized payload dict; raises PayloadError on any violation.
    """
    if not isinstance(payload, dict):
        raise PayloadError("payload must be an object")

    if stream is StreamKind.LOCATION:
        _check_no_extras(payload, {"latitude", "longitude", "altitude"})
        lat = _number(payload, "latitude")
        lon = _number(payload, "longitude")
        alt = _number(payload, "altitude")
        if not -90.0 <= lat <= 90.0:
            raise PayloadError(f"latitude {lat} out of [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise PayloadError(f"longitude {lon} out of [-180, 180]")
        return {"latitude": lat, "longitude": lon, "altitude": alt}

    if stream is StreamKind.ACTIVITY:
        _check_no_extras(payload, {"kind"})
        return {"kind": _choice(payload, "kind", ACTIVITY_KINDS)}

    if stream is StreamKind.APP_USAGE:
        _check_no_extras(payload, {"app_name", "event"})
        app = _require(payload, "app_name", (str,))
        if not app:
            raise PayloadError("app_name must be non-empty")
        return {"app_name": app, "event": _choice(payload, "event", APP_EVENTS)}

    if stream is StreamKind.PHONE_STEPS:
        _check_no_extras(payload, {"steps", "distance", "floors_up", "floors_down"})
        return {
            "steps": _count(payload, "steps"),
            "distance": _number(payload, "distance"),
            "floors_up": _count(payload, "floors_up"),
            "floors_down": _count(payload, "floors_down"),
        }

    if stream is StreamKind.LOCK_UNLOCK:
        _check_no_extras(payload, {"event"})
        return {"event": _choice(payload, "event", LOCK_EVENTS)}

    if stream is StreamKind.WIFI:
        _check_no_extras(payload, {"connected", "ssid"})
        connected = _require(payload, "connected", (bool,))
        out: dict = {"connected": connected}
        if "ssid" in payload:
            ssid = _require(payload, "ssid", (str,))
            if not ssid:
                raise PayloadError("ssid, when present, must be non-empty")
            out["ssid"] = ssid
        return out

    if stream is StreamKind.CALL_LOGS:
        _check_no_extras(payload, {"direction", "duration"})
        duration = _number(payload, "duration")
        if duration < 0:
            raise PayloadError("duration must be >= 0")
        return {"direction": _choice(payload, "direction", CALL_DIRECTIONS),
                "duration": duration}

    if stream is StreamKind.BATTERY:
        _check_no_extras(payload, {"level", "state"})
        level = _number(payload, "level")
        if not 0.0 <= level <= 100.0:
            raise PayloadError(f"battery level {level} out of [0, 100]")
        return {"level": level, "state": _choice(payload, "state", BATTERY_STATES)}

    if stream is StreamKind.GARMIN_STEPS:
        _check_no_extras(payload, {"steps"})
        return {"steps": _count(payload, "steps")}

    if stream is StreamKind.GARMIN_HEART_RATE:
        _check_no_extras(payload, {"bpm"})
        bpm = _number(payload, "bpm")
        if bpm <= 0:
            raise PayloadError(f"bpm must be > 0, got {bpm}")
        return {"bpm": bpm}

    if stream is StreamKind.STRESS_PREDICTION:
        _check_no_extras(payload, {"probability"})
        prob = _number(payload, "probability")
        if not 0.0 <= prob <= 1.0:
            raise PayloadError(f"stress probability {prob} out of [0, 1]")
        return {"probability": prob}

    raise UnknownStreamError(str(stream))


@dataclass
class SensorRecord:
    """One timestamped observation in one stream; the ground truth answers derive from."""

    user_id: str
    stream: StreamKind
    timestamp: float  # UTC epoch seconds
    payload: dict

    def key(self) -> tuple:
        """Identity used for duplicate detection: exact (user, stream, time, payload)."""
        return (self.user_id, self.stream.value, self.timestamp,
                json.dumps(self.payload, sort_keys=True))

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "stream": self.stream.value,
            "timestamp": self.timestamp,
            "payload": dict(self.payload),
        }


@dataclass(frozen=True)
class StreamInfo:
    """Catalog entry rendered into the database descriptions shared with agents."""

    title: str
    info: str
    device: str
    cadence: str  # informational only; gaps are expected in real data


STREAM_CATALOG: dict[StreamKind, StreamInfo] = {
    StreamKind.LOCATION: StreamInfo(
        "Location Database",
        "GPS samples with latitude, longitude, and altitude, collected from the "
        "phone roughly once a minute.",
        "Phone", "~1 minute"),
    StreamKind.ACTIVITY: StreamInfo(
        "Activity Database",
        "Activity categorizations (stationary, walking, cycling, running, "
        "automotive) from the phone's built-in activity detection; a record marks "
        "the moment the detected activity changes.",
        "Phone", "event-driven"),
    StreamKind.APP_USAGE: StreamInfo(
        "App Usage Database",
        "App open and close events with the app name, from which usage blocks and "
        "durations can be derived.",
        "Phone", "event-driven"),
    StreamKind.PHONE_STEPS: StreamInfo(
        "Phone Steps Database",
        "Step counts, distance covered in meters, and floors ascended/descended, "
        "measured by the phone's motion sensors.",
        "Phone", "~1 minute"),
    StreamKind.LOCK_UNLOCK: StreamInfo(
        "Phone Lock/Unlock Database",
        "Phone lock and unlock events, useful for phone-usage and pickup patterns.",
        "Phone", "event-driven"),
    StreamKind.WIFI: StreamInfo(
        "WiFi Database",
        "Connected/not-connected status samples; the network name (SSID) is "
        "present only while connected.",
        "Phone", "~1 minute"),
    StreamKind.CALL_LOGS: StreamInfo(
        "Call Logs Database",
        "Incoming, outgoing, and missed calls with their durations in seconds.",
        "Phone", "event-driven"),
    StreamKind.BATTERY: StreamInfo(
        "Phone Battery Database",
        "Battery level changes with the charging state (charging, discharging, "
        "full).",
        "Phone", "event-driven"),
    StreamKind.GARMIN_STEPS: StreamInfo(
        "Garmin Steps Database",
        "Step counts recorded by the Garmin smartwatch.",
        "Garmin Smartwatch", "~1 minute"),
    StreamKind.GARMIN_HEART_RATE: StreamInfo(
        "Garmin Heart Rate Database",
        "Heart rate in beats per minute (bpm) from the Garmin smartwatch.",
        "Garmin Smartwatch", "~30 seconds"),
    StreamKind.STRESS_PREDICTION: StreamInfo(
        "Garmin Stress ML Model",
        "Physiological stress probabilities predicted from smartwatch heart "
        "signals; values near 1 mean more stressed, near 0 less stressed. "
        "Physiological stress is not always the same as psychological stress.",
        "Garmin Smartwatch", "~30 seconds"),
}


def describe_databases() -> str:
    """Render the catalog in the layout injected into planning prompts.

    One block per stream: title line, Info line, Device line.
    """
    blocks = []
    for kind in StreamKind:
        entry = STREAM_CATALOG[kind]
        blocks.append(f"{entry.title}:\n"
                      f"Info: {entry.info}\n"
                      f"Device: {entry.device}")
    return "\n\n".join(blocks)
