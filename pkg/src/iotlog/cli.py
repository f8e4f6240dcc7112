"""Command-line interface.

Subcommands: validate, enrich, query, gen, classify. Output is JSON by
default (one object, or one object per line for violation lists) so test
harnesses can consume it; --format table switches to aligned text for
humans. Exit codes: 0 success, 1 validation failure, 2 input error,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

from .enrich import (
    CollisionError,
    DerivationError,
    EnrichmentResult,
    InvalidLogError,
    InvalidPlanError,
    enrich,
)
from .plan import (
    EnrichmentPlan,
    PlanParseError,
    bundled_plan,
    bundled_plan_names,
    classify_source,
    parse_plan,
    validate_plan,
)
from .query import QueryParseError, parse_query, run_query
from .scenario import GenConfig, GenConfigError, config_from_dict, generate, write_outputs
from .sensors import SensorIngestError, build_index, load_stream
from .timeutil import format_timestamp
from .xes import Log, XesParseError, parse_xes, validate_log, write_xes

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _json_value(value):
    if isinstance(value, datetime):
        return format_timestamp(value)
    return value


def _emit(obj: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(obj))
    else:
        for key, value in obj.items():
            print(f"{key}: {value}")


def _emit_rows(rows: list[dict], fmt: str) -> None:
    if fmt == "json":
        for row in rows:
            print(json.dumps(row))
        return
    if not rows:
        return
    columns = list(rows[0])
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))


def _read_log(path: str) -> Log:
    return parse_xes(Path(path).read_bytes())


def _read_plan(path: str) -> EnrichmentPlan:
    # A bare name picks a plan bundled with the package (e.g. "scenario1").
    if "/" not in path and not path.endswith(".json") and path in bundled_plan_names():
        return bundled_plan(path)
    return parse_plan(Path(path).read_text(encoding="utf-8"))


def _log_violation_rows(violations) -> list[dict]:
    rows = []
    for v in violations:
        row = {"scope": "log", "code": v.code, "message": v.message}
        if v.case_id is not None:
            row["case_id"] = v.case_id
        if v.key is not None:
            row["key"] = v.key
        rows.append(row)
    return rows


def _plan_issue_rows(issues) -> list[dict]:
    return [
        {"scope": "plan", "code": i.code, "message": i.message, "path": i.path} for i in issues
    ]


def cmd_validate(args) -> int:
    rows: list[dict] = []
    if args.log:
        rows += _log_violation_rows(validate_log(_read_log(args.log)))
    if args.plan:
        rows += _plan_issue_rows(validate_plan(_read_plan(args.plan)))
    _emit_rows(rows, args.format)
    return EXIT_VALIDATION if rows else EXIT_OK


def _audit_row(record) -> dict:
    row = {
        "kind": record.kind,
        "case_id": record.case_id,
        "binding_id": record.binding_id,
        "source_id": record.source_id,
        "key": record.key,
        "value": _json_value(record.value),
        "readings": [
            {
                "sensor_id": r.sensor_id,
                "timestamp": format_timestamp(r.timestamp),
                "value": _json_value(r.value),
                **({"subject_key": r.subject_key} if r.subject_key else {}),
            }
            for r in record.readings
        ],
    }
    if record.event_index is not None:
        row["event_index"] = record.event_index
    if record.replaced is not None:
        row["replaced"] = _json_value(record.replaced)
    return row


def _write_enrichment(result: EnrichmentResult, out_dir: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "enriched.xes"
    log_path.write_bytes(write_xes(result.log))
    report_path = out / "report.json"
    report_path.write_text(
        json.dumps(result.report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    audit_path = out / "audit.jsonl"
    with audit_path.open("w", encoding="utf-8") as handle:
        for record in result.audit:
            handle.write(json.dumps(_audit_row(record)) + "\n")
    return {
        "log": str(log_path),
        "report": str(report_path),
        "audit": str(audit_path),
        "additions": result.additions,
        "warnings": list(result.warnings),
    }


def cmd_enrich(args) -> int:
    log = _read_log(args.log)
    plan = _read_plan(args.plan)
    index = build_index(load_stream(decl, args.sensors) for decl in plan.sources)
    try:
        result = enrich(log, index, plan)
    except InvalidPlanError as exc:
        _emit_rows(_plan_issue_rows(exc.issues), args.format)
        return EXIT_VALIDATION
    except InvalidLogError as exc:
        _emit_rows(_log_violation_rows(exc.violations), args.format)
        return EXIT_VALIDATION
    except (CollisionError, DerivationError) as exc:
        _emit({"error": str(exc)}, args.format)
        return EXIT_VALIDATION
    _emit(_write_enrichment(result, args.out), args.format)
    return EXIT_OK


def cmd_query(args) -> int:
    log = _read_log(args.log)
    result = run_query(log, parse_query(args.query))
    out: dict = {"query": args.query}
    if result.mode == "cases":
        out["case_ids"] = list(result.case_ids)
    else:
        out["count"] = result.count
    if result.errors:
        out["errors"] = [{"case_id": e.case_id, "message": e.message} for e in result.errors]
    _emit(out, args.format)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = config_from_dict(raw)
    else:
        config = GenConfig()
    log, streams, manifest = generate(config)
    written = write_outputs(log, streams, manifest, args.out)
    _emit(
        {
            "out": str(args.out),
            "cases": len(log.traces),
            "interrupted_night_pickups": manifest.interrupted_night_pickups,
            "files": [p.name for p in written],
        },
        args.format,
    )
    return EXIT_OK


def cmd_classify(args) -> int:
    rows = []
    sensors = Path(args.sensors)
    if not sensors.is_dir():
        raise FileNotFoundError(f"not a directory: {sensors}")
    for path in sorted(sensors.iterdir()):
        if path.suffix not in (".csv", ".jsonl"):
            continue
        sensor_type = path.stem
        # Streams whose name mentions the driver identify a person.
        hints = {"subject": "driver"} if "driver" in path.stem.lower() else {}
        category = classify_source(sensor_type, hints)
        rows.append(
            {
                "file": path.name,
                "sensor_type": sensor_type,
                "category": category.value if category else "unclassified",
            }
        )
    _emit_rows(rows, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iotlog",
        description="Enrich XES event logs with sensor context, query them, "
        "and generate test scenarios.",
    )
    parser.add_argument(
        "--format", choices=("json", "table"), default="json", help="output format"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a log and/or plan, print violations")
    p.add_argument("--log", help="XES log path")
    p.add_argument("--plan", help="plan JSON path or bundled plan name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("enrich", help="run a plan over a log and sensor files")
    p.add_argument("--log", required=True, help="XES log path")
    p.add_argument("--plan", required=True, help="plan JSON path or bundled plan name")
    p.add_argument("--sensors", required=True, help="directory holding the sensor files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("query", help="evaluate a query over a log")
    p.add_argument("--log", required=True, help="XES log path")
    p.add_argument("--query", required=True, help="query text")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("gen", help="generate a synthetic scenario")
    p.add_argument("--config", help="generator config JSON path")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("classify", help="suggest context categories for sensor files")
    p.add_argument("--sensors", required=True, help="directory holding the sensor files")
    p.set_defaults(func=cmd_classify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        XesParseError,
        PlanParseError,
        QueryParseError,
        SensorIngestError,
        GenConfigError,
        FileNotFoundError,
        IsADirectoryError,
        PermissionError,
        json.JSONDecodeError,
        UnicodeDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort guard for exit code 3
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main_entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    main_entry()
