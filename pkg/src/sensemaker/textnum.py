"""Numeric-token extraction used by the anti-hallucination checks.

A summary or answer may only mention numbers that are grounded in its source
text (a structured result plus the request that produced it). Dates and
clock times are treated as atomic tokens so '17:38:57' is checked as a whole
rather than as three bare integers.
"""

from __future__ import annotations

import re

# Atomic tokens checked by substring presence in the source.
_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}(?:[ T]\d{2}:\d{2}(?::\d{2})?)?")
_TIME_RE = re.compile(r"\b\d{1,2}:\d{2}(?::\d{2})?\b")
# Plain numbers, with optional thousands separators and decimal part.
_NUMBER_RE = re.compile(r"-?\d+(?:,\d{3})*(?:\.\d+)?")


def _strip(text: str) -> str:
    return text.replace(",", "")


def extract_tokens(text: str) -> list[str]:
    """All numeric tokens in reading order: dates/times first, then bare numbers."""
    spans = []
    tokens = []
    for rx in (_DATE_RE, _TIME_RE):
        for m in rx.finditer(text):
            if any(s <= m.start() < e for s, e in spans):
                continue
            spans.append((m.start(), m.end()))
            tokens.append((m.start(), m.group()))
    for m in _NUMBER_RE.finditer(text):
        if any(s <= m.start() < e or s < m.end() <= e for s, e in spans):
            continue
        tokens.append((m.start(), m.group()))
    return [tok for _, tok in sorted(tokens)]


def _number_values(text: str) -> set[float]:
    return {float(_strip(m.group())) for m in _NUMBER_RE.finditer(text)}


def ungrounded_tokens(text: str, source: str) -> list[str]:
    """Numeric tokens in `text` that do not occur in `source`.

    A date/time token is grounded iff it appears as a substring of the source.
    A bare number is grounded if its numeric value equals some number in the
    source (so "2,075" matches 2075.0) or its digit string occurs verbatim.
    """
    source_stripped = _strip(source)
    source_values = _number_values(source)
    missing = []
    for token in extract_tokens(text):
        if ":" in token or "-" in token.lstrip("-") or _DATE_RE.fullmatch(token):
            if token in source or token in source_stripped:
                continue
            missing.append(token)
            continue
        raw = _strip(token)
        try:
            value = float(raw)
        except ValueError:
            missing.append(token)
            continue
        if value in source_values or raw in source_stripped:
            continue
        missing.append(token)
    return missing
