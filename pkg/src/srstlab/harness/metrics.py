"""Metrics persistence: JSON lines as the canonical form, CSV mirror for
spreadsheets.

Writers emit one fixed column order and readers reject records whose
schema or field set drifted, naming the offender, so silent format skew
cannot creep into aggregated results.
"""

from __future__ import annotations

import csv
import json

from .evaluation import SCHEMA_VERSION, MetricsRecord

FIELD_ORDER = (
    "schema", "preset", "method", "sweep_param", "sweep_value", "seed", "n_test",
    "std_acc", "rob_acc_pgd20", "rob_acc_multi_restart", "rob_acc_black_box",
    "masking_gap", "wall_seconds",
)

_EXPECTED = frozenset(FIELD_ORDER)


def _check_record(rec: dict, where: str):
    keys = set(rec)
    unknown = keys - _EXPECTED
    if unknown:
        raise ValueError(f"{where}: unknown metrics field {sorted(unknown)[0]!r}")
    missing = _EXPECTED - keys
    if missing:
        raise ValueError(f"{where}: missing metrics field {sorted(missing)[0]!r}")
    if rec["schema"] != SCHEMA_VERSION:
        raise ValueError(f"{where}: schema {rec['schema']!r}, expected {SCHEMA_VERSION}")


def record_to_dict(rec) -> dict:
    return rec.as_dict() if isinstance(rec, MetricsRecord) else dict(rec)


def write_metrics(records, jsonl_path: str, csv_path: str | None = None):
    """Write records (MetricsRecord or plain dicts) as JSONL, optionally
    mirrored to CSV in the same column order."""
    dicts = []
    for i, rec in enumerate(records):
        d = record_to_dict(rec)
        _check_record(d, f"record {i}")
        dicts.append(d)
    with open(jsonl_path, "w") as fh:
        for d in dicts:
            ordered = {k: d[k] for k in FIELD_ORDER}
            fh.write(json.dumps(ordered) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(FIELD_ORDER)
            for d in dicts:
                writer.writerow(["" if d[k] is None else d[k] for k in FIELD_ORDER])


def read_metrics(jsonl_path: str) -> list[dict]:
    out = []
    with open(jsonl_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{jsonl_path}:{lineno}: bad JSON ({exc})") from None
            if not isinstance(rec, dict):
                raise ValueError(f"{jsonl_path}:{lineno}: expected an object per line")
            _check_record(rec, f"{jsonl_path}:{lineno}")
            out.append(rec)
    return out
