"""Canonical UTC epoch clock with deployment-timezone rendering of wall-clock strings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from zoneinfo import ZoneInfo

WALL_FORMAT = "%Y-%m-%d %H:%M:%S"

_UTC = timezone.utc


def get_zone(name: str):
    return _UTC if name.upper() == "UTC" else ZoneInfo(name)


def parse_instant(value, tz: str = "UTC") -> float:
    """Parse an instant into UTC epoch seconds.

    Accepts epoch numbers, 'YYYY-MM-DD HH:MM:SS' / 'YYYY-MM-DDTHH:MM:SS'
    wall-clock strings in the deployment timezone, or a bare 'YYYY-MM-DD'
    (midnight local).
    """
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        epoch = float(value)
        if not math.isfinite(epoch):
            raise ValueError(f"timestamp must be finite, got {value!r}")
        return epoch
    if isinstance(value, str):
        text = value.strip()
        for fmt in (WALL_FORMAT, "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d"):
            try:
                naive = datetime.strptime(text, fmt)
            except ValueError:
                continue
            return naive.replace(tzinfo=get_zone(tz)).timestamp()
        raise ValueError(f"unrecognized timestamp string {value!r}; "
                         "use epoch seconds or 'YYYY-MM-DD HH:MM:SS'")
    raise ValueError(f"not a timestamp: {value!r}")


def format_instant(epoch: float, tz: str = "UTC") -> str:
    """Render epoch seconds as a 'YYYY-MM-DD HH:MM:SS' wall-clock string."""
    return datetime.fromtimestamp(epoch, get_zone(tz)).strftime(WALL_FORMAT)


@dataclass(frozen=True)
class TimeRange:
    """Half-open interval [start, end) over UTC epoch seconds."""

    start: float
    end: float

    def __post_init__(self):
        if not self.start <= self.end:
            raise ValueError(f"invalid range: start {self.start} > end {self.end}")

    @classmethod
    def parse(cls, start, end, tz: str = "UTC") -> "TimeRange":
        return cls(parse_instant(start, tz), parse_instant(end, tz))

    def contains(self, epoch: float) -> bool:
        return self.start <= epoch < self.end

    @property
    def duration(self) -> float:
        return self.end - self.start
