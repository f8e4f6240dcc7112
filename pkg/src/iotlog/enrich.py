"""Enrichment engine: correlate sensor readings with a log and attach context.

For every trace, event derivation rules run first (so freshly derived events
can receive attributes), then bindings run in plan order on the evolving
trace (so a binding may correlate via an attribute an earlier binding just
wrote). Event- and instance-level values land in the log; process-level
values land only in the sidecar report. Every addition to the log produces
exactly one audit record, and nothing pre-existing is ever removed or
reordered.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime, timedelta

from .plan import (
    Aggregator,
    CollisionPolicy,
    Correlation,
    CorrelationStrategy,
    Derivation,
    EnrichmentPlan,
    EventDerivationRule,
    PlanIssue,
    TargetKind,
    validate_plan,
)
from .sensors import SensorReading, StreamIndex, build_index, load_stream
from .xes import Attribute, AttrValue, Event, Log, Trace, Violation, validate_log


class EnrichmentError(Exception):
    pass


class InvalidPlanError(EnrichmentError):
    """The plan failed structural validation; see `.issues`."""

    def __init__(self, issues: list[PlanIssue]):
        lines = "; ".join(f"{i.path}: {i.message}" for i in issues)
        super().__init__(f"plan is invalid: {lines}")
        self.issues = tuple(issues)


class InvalidLogError(EnrichmentError):
    """The input log failed validation; see `.violations`."""

    def __init__(self, violations: list[Violation]):
        lines = "; ".join(v.message for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"log is invalid: {lines}{more}")
        self.violations = tuple(violations)


class CollisionError(EnrichmentError):
    """A binding tried to write a key that already exists (policy = error)."""

    def __init__(self, case_id: str, key: str, scope: str, binding_id: str):
        super().__init__(
            f"case {case_id!r}: {scope} attribute {key!r} already present "
            f"(binding {binding_id!r}, collision_policy=error)"
        )
        self.case_id = case_id
        self.key = key
        self.binding_id = binding_id


class DerivationError(EnrichmentError):
    pass


@dataclass(frozen=True)
class AuditRecord:
    """One addition to the log: an attached attribute or an inserted event.

    kind is "event_attribute", "case_attribute" or "derived_event";
    binding_id holds the rule_id for derived events. event_index points into
    the final event tuple of the trace. readings are the sensor readings the
    value was derived from (for a derived event, the reading that started
    the run). replaced holds the previous value when collision_policy =
    overwrite displaced one.
    """

    kind: str
    case_id: str
    binding_id: str
    source_id: str
    key: str  # attribute key, or activity name for derived events
    value: AttrValue
    readings: tuple[SensorReading, ...] = ()
    event_index: int | None = None
    replaced: AttrValue | None = None


@dataclass(frozen=True)
class ProcessContextReport:
    """Process-level context, kept out of the log on purpose.

    entries maps every process-report metric the plan declares to the
    arithmetic mean of its per-case values, or None when no case
    contributed. case_count is the number of traces processed.
    """

    entries: dict[str, float | None]
    case_count: int
    contributions: dict[str, tuple[tuple[str, float], ...]] | None = None

    def to_dict(self) -> dict:
        out: dict = {"entries": dict(self.entries), "case_count": self.case_count}
        if self.contributions is not None:
            out["contributions"] = {
                key: [{"case_id": cid, "value": v} for cid, v in pairs]
                for key, pairs in self.contributions.items()
            }
        return out


@dataclass(frozen=True)
class EnrichmentResult:
    log: Log
    report: ProcessContextReport
    audit: tuple[AuditRecord, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def additions(self) -> int:
        return len(self.audit)


def index_for_plan(plan: EnrichmentPlan, base_dir=None) -> StreamIndex:
    """Load every stream the plan declares and index it."""
    return build_index(load_stream(decl, base_dir) for decl in plan.sources)


# --- correlation ------------------------------------------------------------


def _nearest_before(index: StreamIndex, source_id: str, t: datetime) -> list[SensorReading]:
    reading = index.latest_at_or_before(source_id, t)
    return [reading] if reading is not None else []


def _nearest_within(
    index: StreamIndex, source_id: str, t: datetime, window_seconds: float
) -> list[SensorReading]:
    window = timedelta(seconds=window_seconds)
    best: SensorReading | None = None
    best_key = None
    for reading in index.range_query(source_id, t - window, t + window):
        key = (abs(reading.timestamp - t), reading.timestamp, reading.sensor_id)
        if best_key is None or key < best_key:
            best, best_key = reading, key
    return [best] if best is not None else []


def _span(events: list[Event]) -> tuple[datetime, datetime] | None:
    if not events:
        return None
    return events[0].timestamp, events[-1].timestamp


def correlate_event(
    correlation: Correlation,
    index: StreamIndex,
    source_id: str,
    event: Event,
    events: list[Event],
    trace_attrs: dict[str, AttrValue],
    case_id: str,
) -> tuple[list[SensorReading], str | None]:
    """Readings matched to one event. Trace-scoped strategies fall back to
    the whole span, so every event of the trace sees the same readings."""
    if correlation.strategy is CorrelationStrategy.NEAREST_BEFORE:
        return _nearest_before(index, source_id, event.timestamp), None
    if correlation.strategy is CorrelationStrategy.NEAREST_WITHIN:
        assert correlation.window_seconds is not None
        return (
            _nearest_within(index, source_id, event.timestamp, correlation.window_seconds),
            None,
        )
    return correlate_trace(correlation, index, source_id, events, trace_attrs, case_id)


def correlate_trace(
    correlation: Correlation,
    index: StreamIndex,
    source_id: str,
    events: list[Event],
    trace_attrs: dict[str, AttrValue],
    case_id: str,
) -> tuple[list[SensorReading], str | None]:
    """Readings matched to a whole trace, plus an optional warning.

    The nearest_* strategies anchor on the last event when applied at trace
    scope. An empty trace has no span and correlates with nothing.
    """
    span = _span(events)
    if span is None:
        return [], None
    first, last = span
    if correlation.strategy is CorrelationStrategy.SPAN_OVERLAP:
        return index.range_query(source_id, first, last), None
    if correlation.strategy is CorrelationStrategy.SUBJECT_KEY_EQUALS:
        name = correlation.subject_attribute
        assert name is not None
        if name == "case_id":
            subject = case_id
        elif name in trace_attrs:
            raw = trace_attrs[name]
            if isinstance(raw, str):
                subject = raw
            elif type(raw) is not bool and isinstance(raw, int):
                subject = str(raw)
            else:
                return [], (
                    f"case {case_id!r}: subject attribute {name!r} is not a string or "
                    f"integer; nothing correlated"
                )
        else:
            return [], f"case {case_id!r}: subject attribute {name!r} missing; nothing correlated"
        readings = [
            r for r in index.subject_readings(source_id, subject) if first <= r.timestamp <= last
        ]
        return readings, None
    if correlation.strategy is CorrelationStrategy.NEAREST_BEFORE:
        return _nearest_before(index, source_id, last), None
    assert correlation.window_seconds is not None
    return _nearest_within(index, source_id, last, correlation.window_seconds), None


# --- derivation -------------------------------------------------------------


def _numeric_values(readings: list[SensorReading], context: str) -> list[float]:
    values = []
    for position, reading in enumerate(readings):
        if type(reading.value) is bool or not isinstance(reading.value, (int, float)):
            raise DerivationError(
                f"{context}: reading {position} ({reading.sensor_id!r} at "
                f"{reading.timestamp.isoformat()}) is not numeric"
            )
        values.append(float(reading.value))
    return values


def _coerce(value, output_type: str, context: str) -> AttrValue:
    if output_type == "boolean":
        if type(value) is bool:
            return value
        raise DerivationError(f"{context}: cannot coerce {value!r} to boolean")
    if output_type == "float":
        if type(value) is not bool and isinstance(value, (int, float)):
            return float(value)
        raise DerivationError(f"{context}: cannot coerce {value!r} to float")
    if output_type == "int":
        if type(value) is bool:
            raise DerivationError(f"{context}: cannot coerce a boolean to int")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise DerivationError(f"{context}: cannot coerce {value!r} to int")
    if isinstance(value, str):
        return value
    if type(value) is bool:
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    raise DerivationError(f"{context}: cannot coerce {value!r} to string")


def derive_value(
    derivation: Derivation | None, readings: list[SensorReading], context: str = "derivation"
) -> AttrValue | None:
    """Collapse correlated readings to one attribute value; None if none matched.

    With no derivation the last reading's value passes through unchanged.
    Mean is the left-to-right binary64 sum over stream order divided by the
    count. The bucket aggregator buckets the maximum: label i for the first
    boundary b_i with max <= b_i, the last label if the maximum clears every
    boundary.
    """
    if not readings:
        return None
    if derivation is None:
        return readings[-1].value
    agg = derivation.aggregator
    if agg is Aggregator.FIRST:
        return _coerce(readings[0].value, derivation.output_type, context)
    if agg is Aggregator.LAST:
        return _coerce(readings[-1].value, derivation.output_type, context)
    values = _numeric_values(readings, context)
    if agg is Aggregator.MIN:
        return _coerce(min(values), derivation.output_type, context)
    if agg is Aggregator.MAX:
        return _coerce(max(values), derivation.output_type, context)
    if agg is Aggregator.SUM:
        total = 0.0
        for v in values:
            total += v
        return _coerce(total, derivation.output_type, context)
    if agg is Aggregator.MEAN:
        total = 0.0
        for v in values:
            total += v
        return _coerce(total / len(values), derivation.output_type, context)
    if agg is Aggregator.ANY_ABOVE:
        assert derivation.threshold is not None
        return _coerce(
            any(v > derivation.threshold for v in values), derivation.output_type, context
        )
    if agg is Aggregator.ALL_BELOW:
        assert derivation.threshold is not None
        return _coerce(
            all(v < derivation.threshold for v in values), derivation.output_type, context
        )
    assert agg is Aggregator.THRESHOLD_BUCKET
    assert derivation.boundaries is not None and derivation.labels is not None
    peak = max(values)
    idx = bisect_left(derivation.boundaries, peak)
    return _coerce(derivation.labels[idx], derivation.output_type, context)


# --- event derivation -------------------------------------------------------

DERIVED_FROM_KEY = "derived_from"


def derive_events(
    rule: EventDerivationRule,
    index: StreamIndex,
    events: list[Event],
    trace_attrs: dict[str, AttrValue],
    case_id: str,
) -> tuple[list[tuple[Event, SensorReading]], str | None]:
    """Events a rule inserts for this trace: one per maximal run.

    The correlated readings are scanned in stream order; every maximal run
    of consecutive readings satisfying the condition yields one event at the
    run's first reading. Run detection — rather than one event per reading —
    keeps a high-frequency sensor from flooding the trace. Each event
    carries a derived_from attribute naming the rule, which is also what
    lets re-enrichment recognise it as already present.
    """
    readings, warning = correlate_trace(
        rule.correlation, index, rule.source_id, events, trace_attrs, case_id
    )
    derived: list[tuple[Event, SensorReading]] = []
    in_run = False
    for position, reading in enumerate(readings):
        if type(reading.value) is bool or not isinstance(reading.value, (int, float)):
            raise DerivationError(
                f"rule {rule.rule_id!r}: reading {position} in {rule.source_id!r} is not numeric"
            )
        if rule.condition.holds(float(reading.value)):
            if not in_run:
                in_run = True
                derived.append(
                    (
                        Event(
                            activity=rule.activity,
                            timestamp=reading.timestamp,
                            attributes=(Attribute(DERIVED_FROM_KEY, rule.rule_id),),
                        ),
                        reading,
                    )
                )
        else:
            in_run = False
    return derived, warning


def _already_derived(events: list[Event], candidate: Event, rule_id: str) -> bool:
    return any(
        ev.activity == candidate.activity
        and ev.timestamp == candidate.timestamp
        and ev.get(DERIVED_FROM_KEY) == rule_id
        for ev in events
    )


# --- the enrichment pass ----------------------------------------------------


def _attach(
    attrs: dict[str, AttrValue],
    key: str,
    value: AttrValue,
    policy: CollisionPolicy,
    case_id: str,
    scope: str,
    binding_id: str,
) -> tuple[bool, AttrValue | None]:
    """Write key=value under the collision policy.

    Returns (written, replaced_value). written=False means skip left the
    existing value alone; policy=error raises instead.
    """
    if key in attrs:
        if policy is CollisionPolicy.ERROR:
            raise CollisionError(case_id, key, scope, binding_id)
        if policy is CollisionPolicy.SKIP:
            return False, None
        replaced = attrs[key]
        attrs[key] = value
        return True, replaced
    attrs[key] = value
    return True, None


def _event_with_attrs(event: Event, attrs: dict[str, AttrValue]) -> Event:
    return Event(
        activity=event.activity,
        timestamp=event.timestamp,
        attributes=tuple(Attribute(k, v) for k, v in attrs.items()),
    )


def enrich(log: Log, index: StreamIndex, plan: EnrichmentPlan) -> EnrichmentResult:
    """Run the full plan over the log.

    Traces are processed in log order; bindings within a trace in plan
    order, which makes collision behaviour reproducible. Raises
    InvalidPlanError / InvalidLogError before touching anything, and
    CollisionError mid-pass when collision_policy=error meets an existing
    key.
    """
    issues = validate_plan(plan)
    if issues:
        raise InvalidPlanError(issues)
    violations = validate_log(log)
    if violations:
        raise InvalidLogError(violations)

    audit: list[AuditRecord] = []
    warnings: list[str] = []
    policy = plan.collision_policy
    process_bindings = [
        b for b in plan.bindings if b.target.kind is TargetKind.PROCESS_REPORT_ENTRY
    ]
    contributions: dict[str, list[tuple[str, float]]] = {b.target.key: [] for b in process_bindings}

    new_traces = []
    for trace in log.traces:
        events = list(trace.events)
        trace_attrs: dict[str, AttrValue] = {a.key: a.value for a in trace.attributes}

        # Step 1: event derivation rules, all against the original span.
        inserted: list[tuple[EventDerivationRule, Event, SensorReading]] = []
        for rule in plan.event_rules:
            candidates, warning = derive_events(rule, index, events, trace_attrs, trace.case_id)
            if warning:
                warnings.append(warning)
            for candidate, trigger in candidates:
                if not _already_derived(
                    events + [ev for _, ev, _ in inserted], candidate, rule.rule_id
                ):
                    inserted.append((rule, candidate, trigger))
        if inserted:
            events = sorted(events + [ev for _, ev, _ in inserted], key=lambda e: e.timestamp)
            for rule, ev, trigger in inserted:
                audit.append(
                    AuditRecord(
                        kind="derived_event",
                        case_id=trace.case_id,
                        binding_id=rule.rule_id,
                        source_id=rule.source_id,
                        key=ev.activity,
                        value=ev.timestamp,
                        readings=(trigger,),
                        event_index=events.index(ev),
                    )
                )

        # Step 2: bindings, in plan order, on the evolving trace.
        for binding in plan.bindings:
            kind = binding.target.kind
            key = binding.target.key
            if kind is TargetKind.EVENT_ATTRIBUTE:
                wanted = binding.target.activity_filter
                warned = False
                for pos, event in enumerate(events):
                    if wanted and event.activity not in wanted:
                        continue
                    readings, warning = correlate_event(
                        binding.correlation,
                        index,
                        binding.source_id,
                        event,
                        events,
                        trace_attrs,
                        trace.case_id,
                    )
                    if warning:
                        if not warned:
                            warnings.append(warning)
                            warned = True
                        continue
                    value = derive_value(
                        binding.derivation, readings, f"binding {binding.binding_id!r}"
                    )
                    if value is None:
                        continue
                    attrs = {a.key: a.value for a in event.attributes}
                    written, replaced = _attach(
                        attrs, key, value, policy, trace.case_id, "event", binding.binding_id
                    )
                    if not written:
                        continue
                    events[pos] = _event_with_attrs(event, attrs)
                    audit.append(
                        AuditRecord(
                            kind="event_attribute",
                            case_id=trace.case_id,
                            binding_id=binding.binding_id,
                            source_id=binding.source_id,
                            key=key,
                            value=value,
                            readings=tuple(readings),
                            event_index=pos,
                            replaced=replaced,
                        )
                    )
                continue

            readings, warning = correlate_trace(
                binding.correlation,
                index,
                binding.source_id,
                events,
                trace_attrs,
                trace.case_id,
            )
            if warning:
                warnings.append(warning)
                continue
            value = derive_value(binding.derivation, readings, f"binding {binding.binding_id!r}")
            if value is None:
                continue
            if kind is TargetKind.CASE_ATTRIBUTE:
                written, replaced = _attach(
                    trace_attrs, key, value, policy, trace.case_id, "case", binding.binding_id
                )
                if written:
                    audit.append(
                        AuditRecord(
                            kind="case_attribute",
                            case_id=trace.case_id,
                            binding_id=binding.binding_id,
                            source_id=binding.source_id,
                            key=key,
                            value=value,
                            readings=tuple(readings),
                            replaced=replaced,
                        )
                    )
            else:
                if type(value) is bool or not isinstance(value, (int, float)):
                    raise DerivationError(
                        f"binding {binding.binding_id!r}: process report entries must be "
                        f"numeric, got {value!r}"
                    )
                contributions[binding.target.key].append((trace.case_id, float(value)))

        new_traces.append(
            Trace(
                case_id=trace.case_id,
                attributes=tuple(Attribute(k, v) for k, v in trace_attrs.items()),
                events=tuple(events),
            )
        )

    entries: dict[str, float | None] = {}
    for b in process_bindings:
        values = [v for _, v in contributions[b.target.key]]
        entries[b.target.key] = sum(values) / len(values) if values else None
    return EnrichmentResult(
        log=Log(traces=tuple(new_traces), metadata=log.metadata),
        report=ProcessContextReport(
            entries=entries,
            case_count=len(log.traces),
            contributions={k: tuple(v) for k, v in contributions.items()},
        ),
        audit=tuple(audit),
        warnings=tuple(warnings),
    )
