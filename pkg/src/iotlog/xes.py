"""Typed XES event-log model with deterministic parsing and serialization.

The model is intentionally small: a Log holds traces, a Trace holds events,
and all three carry flat typed attributes (string, int, float, boolean,
date). Instances are immutable after construction and safe to share across
threads; `parse_xes` and `write_xes` are pure functions.

Serialization is deterministic: the mandatory fields come first (case_id on
traces, activity and timestamp on events), remaining attributes follow in
lexicographic key order, timestamps are ISO-8601 UTC with millisecond
precision, and floats use the shortest representation that round-trips
binary64. Equal logs therefore serialize to identical bytes.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime

from .timeutil import format_timestamp, parse_timestamp, to_utc_ms

AttrValue = str | int | float | bool | datetime

_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1

# Violation codes returned by validate_log.
DUPLICATE_CASE_ID = "duplicate_case_id"
UNSORTED_EVENTS = "unsorted_events"
DUPLICATE_ATTRIBUTE_KEY = "duplicate_attribute_key"

# Accepted key aliases for the mandatory fields. We emit the plain form and
# accept the XES standard-extension form on input.
_CASE_ID_KEYS = ("case_id", "concept:name")
_ACTIVITY_KEYS = ("activity", "concept:name")
_TIMESTAMP_KEYS = ("timestamp", "time:timestamp")


class XesParseError(ValueError):
    """A document could not be parsed into a Log."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        position = ""
        if line is not None:
            position = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + position)
        self.line = line
        self.column = column


def _normalize_value(key: str, value: AttrValue) -> AttrValue:
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        if not _INT64_MIN <= value <= _INT64_MAX:
            raise ValueError(f"attribute {key!r}: integer value outside 64-bit range")
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, datetime):
        return to_utc_ms(value)
    if isinstance(value, str):
        return value
    raise TypeError(f"attribute {key!r}: unsupported value type {type(value).__name__}")


@dataclass(frozen=True)
class Attribute:
    """One typed key/value pair. Timestamps are stored normalized to UTC."""

    key: str
    value: AttrValue

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("attribute key must be non-empty")
        object.__setattr__(self, "value", _normalize_value(self.key, self.value))


def _sorted_attrs(attributes) -> tuple[Attribute, ...]:
    # Stable sort: duplicate keys keep their input order so validate_log can
    # still see and report them.
    return tuple(sorted(attributes, key=lambda a: a.key))


def _get(attributes: tuple[Attribute, ...], key: str) -> AttrValue | None:
    for attr in attributes:
        if attr.key == key:
            return attr.value
    return None


@dataclass(frozen=True)
class Event:
    """One process event: an activity observed at a point in time."""

    activity: str
    timestamp: datetime
    attributes: tuple[Attribute, ...] = ()

    def __post_init__(self) -> None:
        if not self.activity:
            raise ValueError("event activity must be non-empty")
        object.__setattr__(self, "timestamp", to_utc_ms(self.timestamp))
        object.__setattr__(self, "attributes", _sorted_attrs(self.attributes))

    def get(self, key: str) -> AttrValue | None:
        return _get(self.attributes, key)

    def attribute_keys(self) -> set[str]:
        return {a.key for a in self.attributes}


@dataclass(frozen=True)
class Trace:
    """One case: a uniquely identified, time-ordered sequence of events.

    Trace-scope attributes are static: they describe the whole case. The
    constructor does not sort events; an out-of-order sequence is
    representable and reported by validate_log.
    """

    case_id: str
    attributes: tuple[Attribute, ...] = ()
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        if not self.case_id:
            raise ValueError("trace case_id must be non-empty")
        object.__setattr__(self, "attributes", _sorted_attrs(self.attributes))
        object.__setattr__(self, "events", tuple(self.events))

    def get(self, key: str) -> AttrValue | None:
        return _get(self.attributes, key)

    def attribute_keys(self) -> set[str]:
        return {a.key for a in self.attributes}

    def span(self) -> tuple[datetime, datetime] | None:
        """Closed interval from first to last event time, None when empty."""
        if not self.events:
            return None
        return self.events[0].timestamp, self.events[-1].timestamp


@dataclass(frozen=True)
class Log:
    """An event log: ordered traces plus log-scope metadata attributes."""

    traces: tuple[Trace, ...] = ()
    metadata: tuple[Attribute, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "metadata", _sorted_attrs(self.metadata))

    def trace(self, case_id: str) -> Trace | None:
        for trace in self.traces:
            if trace.case_id == case_id:
                return trace
        return None


@dataclass(frozen=True)
class Violation:
    """One broken log invariant, with coordinates pointing at the culprit."""

    code: str
    message: str
    case_id: str | None = None
    trace_index: int | None = None
    event_index: int | None = None
    key: str | None = None


def validate_log(log: Log) -> list[Violation]:
    """Check Log invariants and return one Violation per breach.

    Detects duplicate case ids, out-of-order adjacent event pairs, and
    duplicate attribute keys at every scope. An empty result means the log
    is valid.
    """
    violations: list[Violation] = []
    violations.extend(_duplicate_key_violations(log.metadata, None, None, None))

    seen_cases: set[str] = set()
    for ti, trace in enumerate(log.traces):
        if trace.case_id in seen_cases:
            violations.append(
                Violation(
                    DUPLICATE_CASE_ID,
                    f"case_id {trace.case_id!r} appears more than once",
                    case_id=trace.case_id,
                    trace_index=ti,
                )
            )
        seen_cases.add(trace.case_id)

        violations.extend(_duplicate_key_violations(trace.attributes, trace.case_id, ti, None))
        for ei in range(len(trace.events) - 1):
            if trace.events[ei].timestamp > trace.events[ei + 1].timestamp:
                violations.append(
                    Violation(
                        UNSORTED_EVENTS,
                        f"event {ei} is later than event {ei + 1}",
                        case_id=trace.case_id,
                        trace_index=ti,
                        event_index=ei,
                    )
                )
        for ei, event in enumerate(trace.events):
            violations.extend(_duplicate_key_violations(event.attributes, trace.case_id, ti, ei))
    return violations


def _duplicate_key_violations(attributes, case_id, trace_index, event_index):
    seen: set[str] = set()
    duplicated: list[str] = []
    for attr in attributes:
        if attr.key in seen and attr.key not in duplicated:
            duplicated.append(attr.key)
        seen.add(attr.key)
    return [
        Violation(
            DUPLICATE_ATTRIBUTE_KEY,
            f"attribute key {key!r} appears more than once",
            case_id=case_id,
            trace_index=trace_index,
            event_index=event_index,
            key=key,
        )
        for key in duplicated
    ]


# --- parsing ---------------------------------------------------------------


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_attribute(element: ET.Element, where: str) -> Attribute:
    tag = _localname(element.tag)
    key = element.get("key")
    raw = element.get("value")
    if tag in ("list", "container"):
        raise XesParseError(
            f"{where}: nested attribute <{tag} key={key!r}> is not supported; "
            "only flat string/int/float/boolean/date attributes are accepted"
        )
    if key is None or raw is None:
        raise XesParseError(f"{where}: attribute element <{tag}> needs key and value")
    try:
        if tag == "string":
            return Attribute(key, raw)
        if tag == "int":
            return Attribute(key, int(raw))
        if tag == "float":
            return Attribute(key, float(raw))
        if tag == "boolean":
            lowered = raw.strip().lower()
            if lowered not in ("true", "false"):
                raise ValueError(f"bad boolean literal {raw!r}")
            return Attribute(key, lowered == "true")
        if tag == "date":
            return Attribute(key, parse_timestamp(raw))
    except XesParseError:
        raise
    except ValueError as exc:
        raise XesParseError(f"{where}: attribute {key!r}: {exc}") from exc
    raise XesParseError(f"{where}: unknown attribute type tag <{tag}>")


_STRUCTURAL_TAGS = {"extension", "global", "classifier"}


def _take(attributes: list[Attribute], keys: tuple[str, ...]) -> AttrValue | None:
    for key in keys:
        for i, attr in enumerate(attributes):
            if attr.key == key:
                del attributes[i]
                return attr.value
    return None


def parse_xes(document: bytes | str) -> Log:
    """Parse an XES document into a Log.

    The mandatory fields are read from `case_id`/`activity`/`timestamp`
    attribute elements (the `concept:name` / `time:timestamp` aliases are
    also accepted); everything else is kept as a plain attribute. Events are
    re-sorted by timestamp with input order preserved on ties. Extension,
    global, and classifier declarations are skipped.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, column = exc.position
        raise XesParseError(f"XML syntax error: {exc.msg}", line=line, column=column) from exc
    if _localname(root.tag) != "log":
        raise XesParseError(f"expected <log> root element, found <{_localname(root.tag)}>")

    metadata: list[Attribute] = []
    traces: list[Trace] = []
    seen_cases: set[str] = set()
    for child in root:
        tag = _localname(child.tag)
        if tag in _STRUCTURAL_TAGS:
            continue
        if tag != "trace":
            metadata.append(_parse_attribute(child, "log"))
            continue

        trace_index = len(traces)
        attrs: list[Attribute] = []
        events: list[Event] = []
        for node in child:
            node_tag = _localname(node.tag)
            if node_tag != "event":
                attrs.append(_parse_attribute(node, f"trace {trace_index}"))
                continue
            event_attrs = [
                _parse_attribute(leaf, f"trace {trace_index}, event {len(events)}")
                for leaf in node
            ]
            where = f"trace {trace_index}, event {len(events)}"
            activity = _take(event_attrs, _ACTIVITY_KEYS)
            timestamp = _take(event_attrs, _TIMESTAMP_KEYS)
            if activity is None or not isinstance(activity, str) or not activity:
                raise XesParseError(f"{where}: missing mandatory activity")
            if timestamp is None or not isinstance(timestamp, datetime):
                raise XesParseError(f"{where}: missing mandatory timestamp")
            events.append(Event(activity, timestamp, tuple(event_attrs)))

        case_value = _take(attrs, _CASE_ID_KEYS)
        if case_value is None:
            raise XesParseError(f"trace {trace_index}: missing case_id")
        case_id = str(case_value)
        if case_id in seen_cases:
            raise XesParseError(f"trace {trace_index}: duplicate case_id {case_id!r}")
        seen_cases.add(case_id)

        events.sort(key=lambda e: e.timestamp)  # stable: ties keep input order
        traces.append(Trace(case_id, tuple(attrs), tuple(events)))
    return Log(tuple(traces), tuple(metadata))


# --- writing ---------------------------------------------------------------


def _value_text(value: AttrValue) -> tuple[str, str]:
    """Map a typed value to its (element tag, text form)."""
    if isinstance(value, bool):
        return "boolean", "true" if value else "false"
    if isinstance(value, int):
        return "int", str(value)
    if isinstance(value, float):
        return "float", repr(value)
    if isinstance(value, datetime):
        return "date", format_timestamp(value)
    return "string", value


def _append_attribute(parent: ET.Element, attr: Attribute) -> None:
    tag, text = _value_text(attr.value)
    ET.SubElement(parent, tag, key=attr.key, value=text)


def write_xes(log: Log) -> bytes:
    """Serialize a valid Log to UTF-8 XES bytes, deterministically."""
    root = ET.Element("log", {"xes.version": "1.0"})
    for attr in log.metadata:
        _append_attribute(root, attr)
    for trace in log.traces:
        trace_el = ET.SubElement(root, "trace")
        ET.SubElement(trace_el, "string", key="case_id", value=trace.case_id)
        for attr in trace.attributes:
            _append_attribute(trace_el, attr)
        for event in trace.events:
            event_el = ET.SubElement(trace_el, "event")
            ET.SubElement(event_el, "string", key="activity", value=event.activity)
            ET.SubElement(
                event_el, "date", key="timestamp", value=format_timestamp(event.timestamp)
            )
            for attr in event.attributes:
                _append_attribute(event_el, attr)
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True)
