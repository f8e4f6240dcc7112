"""Timestamp normalization shared across the package.

Every timestamp handled here is a timezone-aware UTC datetime truncated to
millisecond precision. Naive inputs are interpreted as UTC; zoned inputs are
converted. The single textual format emitted anywhere is ISO-8601 with a
+00:00 offset and exactly three fractional digits.
"""

from __future__ import annotations

from datetime import datetime, timezone

UTC = timezone.utc


def to_utc_ms(value: datetime) -> datetime:
    """Normalize a datetime to UTC with millisecond precision."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=UTC)
    else:
        value = value.astimezone(UTC)
    return value.replace(microsecond=(value.microsecond // 1000) * 1000)


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp, accepting a trailing Z and naive forms.

    Raises ValueError on anything fromisoformat cannot handle after the Z
    normalization (Python 3.10 rejects the Z suffix natively).
    """
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    return to_utc_ms(datetime.fromisoformat(cleaned))


def format_timestamp(value: datetime) -> str:
    """Render a datetime as ISO-8601 UTC with millisecond precision."""
    return to_utc_ms(value).isoformat(timespec="milliseconds")
