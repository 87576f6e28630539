"""Versioned CSV and JSON files: cohorts, designs, unmatched logs, reports, truth records."""

import json
import math
import os
from typing import Any, Iterable, Optional, Sequence

import pandas as pd

from .balance import BalanceTable
from .core_model import EventRecord, MatchedSet, StratumKey, SubjectHistory, validate_cohort
from .errors import SchemaError
from .inference import SensitivityReport
from .logger import setup_logger
from .riskset_matcher import MatchDesign, UnmatchedTreated
from .utils import (
    ARM_CONTROL, ARM_TREATED, FIXED_PREFIX, FLOAT_FORMAT, OUTCOME_PREFIX,
    RECORD_EVENT, RECORD_SUBJECT, SCHEMA_HEADER, STRATUM_SEP, TV_PREFIX,
)

logger = setup_logger(__name__)

COHORT_BASE    = ["record", "subject_id", "event_index", "event_time", "state"]
DESIGN_COLUMNS = ["set_id", "k", "stratum", "arm", "subject_id", "distance"]
UNMATCHED_COLUMNS = ["subject_id", "k", "reason"]
UNMATCHED_SUFFIX  = ".unmatched.csv"
TRUTH_SUFFIX      = ".truth.json"


def fmt(value: float) -> str:
    """17 significant digits: parses back to the same double."""
    return FLOAT_FORMAT % float(value)


def _fmt_int(value: int) -> str:
    return str(int(value))


def _write_frame(frame: pd.DataFrame, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(SCHEMA_HEADER + "\n")
        frame.to_csv(f, index=False, lineterminator="\n")


def _read_frame(path: str, required: Sequence[str]) -> pd.DataFrame:
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\r\n")
        if first != SCHEMA_HEADER:
            raise SchemaError(f"{path}: expected '{SCHEMA_HEADER}', found '{first}'")
        try:
            frame = pd.read_csv(f, dtype=str, keep_default_na=False)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise SchemaError(f"{path}: {e}") from e
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    return frame


def _number(text: str, what: str, integer: bool = False):
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{what}: '{text}' is not a number") from None
    if not math.isfinite(value):
        raise SchemaError(f"{what}: '{text}' is not finite")
    if integer:
        if value != int(value):
            raise SchemaError(f"{what}: '{text}' is not an integer")
        return int(value)
    return value


# Cohort ----------------------------------------------------------------------

def _names(cohort: Sequence[SubjectHistory]) -> tuple[list[str], list[str], list[str]]:
    fixed, tv, outcomes = set(), set(), set()
    for subject in cohort:
        fixed.update(subject.fixed_covariates)
        outcomes.update(subject.outcomes)
        for event in subject.events:
            tv.update(event.tv_covariates)
    return sorted(fixed), sorted(tv), sorted(outcomes)


def write_cohort(cohort: Sequence[SubjectHistory], path: str) -> None:
    """
    Write a cohort in long format: one subject row, then one row per event.

    Args:
        cohort: Subjects, written in the given order.
        path: Output file.
    """
    validate_cohort(cohort)
    fixed, tv, outcomes = _names(cohort)
    for subject in cohort:
        for event in subject.events:
            if set(event.tv_covariates) != set(tv):
                raise SchemaError(
                    f"Subject {subject.subject_id}, event {event.event_index}: "
                    f"time-varying covariates must be {tv}"
                )
    columns = (COHORT_BASE + [FIXED_PREFIX + n for n in fixed] + [TV_PREFIX + n for n in tv]
               + [OUTCOME_PREFIX + n for n in outcomes])

    rows: list[dict[str, str]] = []
    for subject in cohort:
        row = {column: "" for column in columns}
        row.update(record=RECORD_SUBJECT, subject_id=subject.subject_id)
        row.update({FIXED_PREFIX + n: str(v) for n, v in subject.fixed_covariates.items()})
        row.update({OUTCOME_PREFIX + n: fmt(v) for n, v in subject.outcomes.items()})
        rows.append(row)
        for event in subject.events:
            row = {column: "" for column in columns}
            row.update(
                record=RECORD_EVENT, subject_id=subject.subject_id,
                event_index=_fmt_int(event.event_index), event_time=fmt(event.event_time),
                state=_fmt_int(event.state),
            )
            row.update({TV_PREFIX + n: fmt(v) for n, v in event.tv_covariates.items()})
            rows.append(row)

    _write_frame(pd.DataFrame(rows, columns=columns), path)
    logger.info(f"Wrote {len(cohort)} subjects to {path}")


def _prefixed(row: pd.Series, prefix: str) -> dict[str, str]:
    return {
        column[len(prefix):]: row[column]
        for column in row.index if column.startswith(prefix) and row[column] != ""
    }


def read_cohort(path: str) -> list[SubjectHistory]:
    """
    Read a cohort written by write_cohort.

    An empty fixed covariate or outcome cell means the value is absent. Every event
    must carry every time-varying covariate of the file.

    Args:
        path: Cohort CSV.

    Returns:
        Subjects in file order.
    """
    frame = _read_frame(path, COHORT_BASE)
    tv_columns = [column for column in frame.columns if column.startswith(TV_PREFIX)]
    subjects: dict[str, dict[str, Any]] = {}
    events: dict[str, list[EventRecord]] = {}

    for line, row in frame.iterrows():
        where = f"{path}, row {line + 1}"
        subject_id = row["subject_id"]
        if not subject_id:
            raise SchemaError(f"{where}: empty subject_id")
        if row["record"] == RECORD_SUBJECT:
            if subject_id in subjects:
                raise SchemaError(f"{where}: duplicate subject_id {subject_id}")
            subjects[subject_id] = {
                "fixed": _prefixed(row, FIXED_PREFIX),
                "outcomes": {
                    n: _number(v, f"{where}, outcome {n}")
                    for n, v in _prefixed(row, OUTCOME_PREFIX).items()
                },
            }
        elif row["record"] == RECORD_EVENT:
            empty = [column for column in tv_columns if row[column] == ""]
            if empty:
                raise SchemaError(f"{where}: missing time-varying covariates {empty}")
            events.setdefault(subject_id, []).append(EventRecord(
                event_index=_number(row["event_index"], f"{where}, event_index", integer=True),
                event_time=_number(row["event_time"], f"{where}, event_time"),
                state=_number(row["state"], f"{where}, state", integer=True),
                tv_covariates={
                    n: _number(v, f"{where}, {n}")
                    for n, v in _prefixed(row, TV_PREFIX).items()
                },
            ))
        else:
            raise SchemaError(f"{where}: unknown record type '{row['record']}'")

    orphans = sorted(set(events) - set(subjects))
    if orphans:
        raise SchemaError(f"{path}: events for subjects without a subject row: {orphans[:5]}")

    cohort = [
        SubjectHistory(
            subject_id=subject_id,
            fixed_covariates=data["fixed"],
            events=tuple(sorted(events.get(subject_id, []), key=lambda e: e.event_index)),
            outcomes=data["outcomes"],
        )
        for subject_id, data in subjects.items()
    ]
    logger.info(f"Read {len(cohort)} subjects from {path}")
    return cohort


# Design ----------------------------------------------------------------------

def unmatched_path(design_path: str) -> str:
    root, _ = os.path.splitext(design_path)
    return root + UNMATCHED_SUFFIX


def write_design(design: MatchDesign, path: str) -> None:
    """
    Write the design, one row per member, and its unmatched log next to it.

    The treated row carries the set's total distance, each control row its pair
    distance.

    Args:
        design: Matched design.
        path: Design CSV.
    """
    rows: list[dict[str, str]] = []
    for matched in design.sets:
        common = {
            "set_id": _fmt_int(matched.set_id),
            "k": _fmt_int(matched.event_index),
            "stratum": matched.stratum_key.label(STRATUM_SEP),
        }
        rows.append({**common, "arm": ARM_TREATED, "subject_id": matched.treated,
                     "distance": fmt(matched.total_distance)})
        distances = matched.control_distances or (float("nan"),) * len(matched.controls)
        for control, distance in zip(matched.controls, distances):
            rows.append({**common, "arm": ARM_CONTROL, "subject_id": control,
                         "distance": "" if math.isnan(distance) else fmt(distance)})
    _write_frame(pd.DataFrame(rows, columns=DESIGN_COLUMNS), path)
    write_unmatched(design.unmatched_treated, unmatched_path(path))
    logger.info(f"Wrote {len(design.sets)} matched sets to {path}")


def write_unmatched(unmatched: Iterable[UnmatchedTreated], path: str) -> None:
    rows = [
        {"subject_id": u.subject_id, "k": _fmt_int(u.k), "reason": u.reason} for u in unmatched
    ]
    _write_frame(pd.DataFrame(rows, columns=UNMATCHED_COLUMNS), path)


def read_unmatched(path: str) -> list[UnmatchedTreated]:
    frame = _read_frame(path, UNMATCHED_COLUMNS)
    return [
        UnmatchedTreated(row["subject_id"], _number(row["k"], f"{path}, k", integer=True), row["reason"])
        for _, row in frame.iterrows()
    ]


def _stratum(label: str, k: int, where: str) -> StratumKey:
    parts = label.split(STRATUM_SEP)
    if _number(parts[0], f"{where}, stratum", integer=True) != k:
        raise SchemaError(f"{where}: stratum '{label}' does not start with k={k}")
    return StratumKey(k, tuple(parts[1:]))


def read_design(path: str) -> MatchDesign:
    """
    Read a design written by write_design, with its unmatched log when present.

    Args:
        path: Design CSV.

    Returns:
        The matched design, sets ordered by id.
    """
    frame = _read_frame(path, DESIGN_COLUMNS)
    groups: dict[int, dict[str, Any]] = {}
    for line, row in frame.iterrows():
        where = f"{path}, row {line + 1}"
        set_id = _number(row["set_id"], f"{where}, set_id", integer=True)
        k = _number(row["k"], f"{where}, k", integer=True)
        group = groups.setdefault(set_id, {
            "k": k, "stratum": _stratum(row["stratum"], k, where),
            "treated": None, "total": 0.0, "controls": [], "distances": [],
        })
        if group["k"] != k or group["stratum"].label(STRATUM_SEP) != row["stratum"]:
            raise SchemaError(f"{where}: set {set_id} mixes event indices or strata")
        if row["arm"] == ARM_TREATED:
            if group["treated"] is not None:
                raise SchemaError(f"{where}: set {set_id} has two treated members")
            group["treated"] = row["subject_id"]
            group["total"] = _number(row["distance"], f"{where}, distance")
        elif row["arm"] == ARM_CONTROL:
            group["controls"].append(row["subject_id"])
            if row["distance"] != "":
                group["distances"].append(_number(row["distance"], f"{where}, distance"))
        else:
            raise SchemaError(f"{where}: unknown arm '{row['arm']}'")

    sets = []
    for set_id in sorted(groups):
        group = groups[set_id]
        if group["treated"] is None:
            raise SchemaError(f"{path}: set {set_id} has no treated member")
        sets.append(MatchedSet(
            set_id=set_id,
            event_index=group["k"],
            stratum_key=group["stratum"],
            treated=group["treated"],
            controls=tuple(group["controls"]),
            total_distance=group["total"],
            control_distances=tuple(group["distances"]),
        ))

    sidecar = unmatched_path(path)
    unmatched = read_unmatched(sidecar) if os.path.exists(sidecar) else []
    return MatchDesign(sets=tuple(sets), unmatched_treated=tuple(unmatched))


# Reports ---------------------------------------------------------------------

def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_json(data: Any, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_safe(data), f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: {e}") from e


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "" if math.isnan(value) else fmt(value)
    return str(value)


def write_table(frame: pd.DataFrame, path: str) -> None:
    """Any result table, every float at 17 significant digits."""
    _write_frame(frame.apply(lambda column: column.map(_cell)), path)


def write_report(report: SensitivityReport, prefix: str) -> tuple[str, str]:
    """
    Write PREFIX.report.json and PREFIX.table.csv.

    Args:
        report: Sensitivity report.
        prefix: Output prefix.

    Returns:
        The two paths written.
    """
    json_path, csv_path = f"{prefix}.report.json", f"{prefix}.table.csv"
    write_json(report.to_dict(), json_path)
    rows = [row for row in report.to_dict()["rows"]]
    write_table(pd.DataFrame(rows), csv_path)
    logger.info(f"Wrote sensitivity report to {json_path} and {csv_path}")
    return json_path, csv_path


def write_balance(table: BalanceTable, qq: dict, boxplots: dict, prefix: str) -> list[str]:
    """Write PREFIX.balance.csv, PREFIX.qq.json and PREFIX.boxplot.json."""
    paths = [f"{prefix}.balance.csv", f"{prefix}.qq.json", f"{prefix}.boxplot.json"]
    write_table(table.frame, paths[0])
    write_json(qq, paths[1])
    write_json(boxplots, paths[2])
    logger.info(f"Wrote balance outputs with prefix {prefix}")
    return paths


def truth_path(cohort_path: str) -> str:
    return cohort_path + TRUTH_SUFFIX


def design_sidecar_path(cohort_path: str) -> str:
    return cohort_path + ".design.csv"


def write_truth(truth: dict, cohort_path: str, extra: Optional[dict] = None) -> str:
    path = truth_path(cohort_path)
    write_json({**truth, **(extra or {})}, path)
    return path
