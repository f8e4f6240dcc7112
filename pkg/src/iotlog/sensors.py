"""Sensor stream ingestion and time-indexed lookup.

Streams are loaded from CSV or JSON-lines files, one file per sensor source,
and indexed for closed-interval range queries and subject-key lookups. A
malformed row fails the whole load with its row number; silently skipping
rows would make downstream enrichment unauditable.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping

from .timeutil import parse_timestamp, to_utc_ms

if TYPE_CHECKING:
    from .plan import SourceDecl

ReadingValue = float | str | bool


class SensorIngestError(ValueError):
    """A source file is missing or contains a row that cannot be parsed."""

    def __init__(self, message: str, *, path: str | None = None, row: int | None = None):
        prefix = f"{path}: " if path else ""
        suffix = f" (row {row})" if row is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")
        self.path = path
        self.row = row


class UnknownSourceError(LookupError):
    """A source_id was requested that the index does not contain."""

    def __init__(self, source_id: str):
        super().__init__(f"unknown sensor source {source_id!r}")
        self.source_id = source_id


@dataclass(frozen=True)
class SensorReading:
    """One timestamped measurement from one sensor.

    subject_key is an optional identity-linkage token (e.g. the license
    plate read off an RFID tag) used to correlate readings with cases.
    location, when present, is (longitude, latitude) in decimal degrees.
    """

    sensor_id: str
    timestamp: datetime
    value: ReadingValue
    unit: str | None = None
    subject_key: str | None = None
    location: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.sensor_id:
            raise ValueError("sensor_id must be non-empty")
        object.__setattr__(self, "timestamp", to_utc_ms(self.timestamp))
        if isinstance(self.value, bool) or isinstance(self.value, (str, float)):
            pass
        elif isinstance(self.value, int):
            object.__setattr__(self, "value", float(self.value))
        else:
            raise TypeError(f"unsupported reading value type {type(self.value).__name__}")
        if self.location is not None:
            lon, lat = self.location
            if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
                raise ValueError(f"location out of range: {self.location}")
            object.__setattr__(self, "location", (float(lon), float(lat)))


@dataclass(frozen=True)
class SensorStream:
    """All readings from one source, sorted by (timestamp, sensor_id)."""

    source_id: str
    sensor_type: str
    readings: tuple[SensorReading, ...] = ()

    def __post_init__(self) -> None:
        if not self.source_id:
            raise ValueError("source_id must be non-empty")
        ordered = tuple(sorted(self.readings, key=lambda r: (r.timestamp, r.sensor_id)))
        object.__setattr__(self, "readings", ordered)


class StreamIndex:
    """Immutable lookup structure over a set of streams.

    Supports closed-interval time range queries per stream (bisect on the
    sorted timestamps) and subject-key lookups, both returning readings in
    stream order. Safe for concurrent readers.
    """

    def __init__(self, streams: Iterable[SensorStream]):
        self._streams: dict[str, SensorStream] = {}
        self._timestamps: dict[str, list[datetime]] = {}
        self._by_subject: dict[str, list[tuple[str, int]]] = {}
        for stream in streams:
            if stream.source_id in self._streams:
                raise ValueError(f"duplicate source_id {stream.source_id!r}")
            self._streams[stream.source_id] = stream
            self._timestamps[stream.source_id] = [r.timestamp for r in stream.readings]
            for pos, reading in enumerate(stream.readings):
                if reading.subject_key is not None:
                    self._by_subject.setdefault(reading.subject_key, []).append(
                        (stream.source_id, pos)
                    )

    @property
    def streams(self) -> Mapping[str, SensorStream]:
        return self._streams

    def stream(self, source_id: str) -> SensorStream:
        try:
            return self._streams[source_id]
        except KeyError:
            raise UnknownSourceError(source_id) from None

    def range_query(self, source_id: str, t1: datetime, t2: datetime) -> list[SensorReading]:
        """All readings of a stream with t1 <= timestamp <= t2 (closed ends)."""
        if t1 > t2:
            raise ValueError("range_query requires t1 <= t2")
        stream = self.stream(source_id)
        timestamps = self._timestamps[source_id]
        lo = bisect_left(timestamps, to_utc_ms(t1))
        hi = bisect_right(timestamps, to_utc_ms(t2))
        return list(stream.readings[lo:hi])

    def latest_at_or_before(self, source_id: str, t: datetime) -> SensorReading | None:
        """The latest reading with timestamp <= t, or None."""
        stream = self.stream(source_id)
        idx = bisect_right(self._timestamps[source_id], to_utc_ms(t))
        return stream.readings[idx - 1] if idx else None

    def subject_positions(self, subject_key: str) -> list[tuple[str, int]]:
        return list(self._by_subject.get(subject_key, ()))

    def subject_readings(self, source_id: str, subject_key: str) -> list[SensorReading]:
        """Readings of one stream carrying the given subject key, in order."""
        stream = self.stream(source_id)
        return [
            stream.readings[pos]
            for sid, pos in self._by_subject.get(subject_key, ())
            if sid == source_id
        ]


def build_index(streams: Iterable[SensorStream]) -> StreamIndex:
    """Index streams for range and subject queries; source_ids must be unique."""
    return StreamIndex(streams)


def range_query(
    index: StreamIndex, source_id: str, t1: datetime, t2: datetime
) -> list[SensorReading]:
    return index.range_query(source_id, t1, t2)


# --- file loading -----------------------------------------------------------

_OPTIONAL_COLUMNS = ("sensor_id", "unit", "subject_key", "lon", "lat")


def _parse_value(raw, value_type: str, *, from_json: bool) -> ReadingValue:
    if value_type == "decimal":
        if from_json:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ValueError(f"expected a number, got {raw!r}")
            return float(raw)
        return float(raw)
    if value_type == "boolean":
        if from_json:
            if not isinstance(raw, bool):
                raise ValueError(f"expected a boolean, got {raw!r}")
            return raw
        lowered = str(raw).strip().lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        raise ValueError(f"bad boolean literal {raw!r}")
    if from_json and not isinstance(raw, str):
        raise ValueError(f"expected a string, got {raw!r}")
    return str(raw)


def _reading_from_fields(fields: dict, source: SourceDecl, *, from_json: bool) -> SensorReading:
    timestamp_raw = fields.get("timestamp")
    value_raw = fields.get("value")
    if timestamp_raw is None or timestamp_raw == "":
        raise ValueError("missing timestamp")
    if value_raw is None or value_raw == "":
        raise ValueError("missing value")
    timestamp = parse_timestamp(str(timestamp_raw))
    value = _parse_value(value_raw, source.value_type, from_json=from_json)

    def opt(name: str) -> str | None:
        raw = fields.get(name)
        if raw is None or raw == "":
            return None
        return str(raw)

    lon, lat = fields.get("lon"), fields.get("lat")
    location = None
    if lon not in (None, "") or lat not in (None, ""):
        if lon in (None, "") or lat in (None, ""):
            raise ValueError("lon and lat must be given together")
        location = (float(lon), float(lat))
    return SensorReading(
        sensor_id=opt("sensor_id") or source.source_id,
        timestamp=timestamp,
        value=value,
        unit=opt("unit"),
        subject_key=opt("subject_key"),
        location=location,
    )


def load_stream(source: SourceDecl, base_dir: str | Path | None = None) -> SensorStream:
    """Load one declared sensor source into a sorted SensorStream.

    CSV files need a header naming at least `timestamp` and `value`; the
    optional columns are sensor_id, unit, subject_key, lon, lat. JSON-lines
    files use the same field names, with native JSON types for `value`.
    A file with a valid header and zero rows yields an empty stream.
    """
    path = Path(base_dir) / source.path if base_dir is not None else Path(source.path)
    if not path.is_file():
        raise SensorIngestError("file not found", path=str(path))
    if source.format == "csv":
        readings = _load_csv(path, source)
    else:
        readings = _load_jsonl(path, source)
    return SensorStream(source.source_id, source.sensor_type, tuple(readings))


def _load_csv(path: Path, source: SourceDecl) -> list[SensorReading]:
    readings = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for required in ("timestamp", "value"):
            if required not in header:
                raise SensorIngestError(f"header is missing column {required!r}", path=str(path))
        for record in reader:
            try:
                readings.append(_reading_from_fields(record, source, from_json=False))
            except ValueError as exc:
                raise SensorIngestError(str(exc), path=str(path), row=reader.line_num) from exc
    return readings


def _load_jsonl(path: Path, source: SourceDecl) -> list[SensorReading]:
    readings = []
    with path.open(encoding="utf-8") as handle:
        for row_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("each line must be a JSON object")
                readings.append(_reading_from_fields(record, source, from_json=True))
            except (ValueError, TypeError) as exc:
                raise SensorIngestError(str(exc), path=str(path), row=row_number) from exc
    return readings
