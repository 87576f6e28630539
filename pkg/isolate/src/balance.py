"""Covariate balance tables and plot-ready outcome summaries for a matched design."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .core_model import HistoryView, SubjectHistory, history_view, validate_cohort
from .errors import (
    BalanceViolation, EmptyDesign, MissingEvent, MissingOutcome, SchemaError,
    UnknownVariable, UnresolvableCovariate,
)
from .logger import setup_logger
from .riskset_matcher import ExactVariable, MatchDesign
from .utils import ARM_CONTROL, ARM_TREATED, POOLED_K, resolve_threads

logger = setup_logger(__name__)

MOMENT_MEAN = "mean"

BALANCE_COLUMNS = [
    "variable", "level", "k",
    "treated_count", "control_count", "treated_percent", "control_percent",
    "treated_mean", "control_mean", "std_diff",
]


@dataclass(frozen=True)
class BalanceTable:
    """Balance rows keyed by (variable, category or moment, k); k is `all` for pooled rows."""
    frame: pd.DataFrame

    def row(self, variable: str, level: str, k: Union[int, str]) -> pd.Series:
        match = self.frame[
            (self.frame["variable"] == variable)
            & (self.frame["level"] == level)
            & (self.frame["k"].astype(str) == str(k))
        ]
        if match.empty:
            raise KeyError(f"No balance row for ({variable}, {level}, {k})")
        return match.iloc[0]

    def variables(self) -> list[str]:
        return list(dict.fromkeys(self.frame["variable"]))


def standardized_difference(treated: Sequence[float], control: Sequence[float]) -> float:
    """(mean_T - mean_C) / sqrt((s2_T + s2_C) / 2) with ddof=1 variances."""
    t = np.asarray(treated, dtype=float)
    c = np.asarray(control, dtype=float)
    diff = float(t.mean() - c.mean())
    var_t = float(t.var(ddof=1)) if t.size > 1 else 0.0
    var_c = float(c.var(ddof=1)) if c.size > 1 else 0.0
    scale = math.sqrt((var_t + var_c) / 2)
    if scale == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / scale


class _Members:
    """History views and arms of every matched subject, at the set's event index."""

    def __init__(self, design: MatchDesign, cohort: Sequence[SubjectHistory]) -> None:
        if not design.sets:
            raise EmptyDesign("Design has no matched sets")
        self.design = design
        self.index = validate_cohort(cohort)
        self.exact: dict[str, ExactVariable] = {}
        if design.config_echo is not None:
            elig = design.config_echo[0]
            self.exact = {var.name: var for var in elig.exact_variables}
        self.views: dict[str, HistoryView] = {}
        for matched in design.sets:
            for member in matched.members:
                if member not in self.index:
                    raise SchemaError(f"Subject {member} of set {matched.set_id} is not in the cohort")
                self.views[member] = history_view(self.index[member], matched.event_index)

    def value(self, subject_id: str, variable: str):
        view = self.views[subject_id]
        if variable in self.exact:
            return self.exact[variable].value(view)
        return view.value(variable)

    def outcome(self, subject_id: str, name: str) -> float:
        return float(self.index[subject_id].outcome(name))


def _level_rows(variable: str, k: Union[int, str], treated: list, control: list) -> list[dict]:
    if all(isinstance(x, str) for x in treated + control):
        rows = []
        for level in sorted(set(treated) | set(control)):
            t = [float(x == level) for x in treated]
            c = [float(x == level) for x in control]
            rows.append({
                "variable": variable, "level": level, "k": k,
                "treated_count": int(sum(t)), "control_count": int(sum(c)),
                "treated_percent": 100 * sum(t) / len(t),
                "control_percent": 100 * sum(c) / len(c),
                "treated_mean": np.nan, "control_mean": np.nan,
                "std_diff": standardized_difference(t, c),
            })
        return rows
    t = [float(x) for x in treated]
    c = [float(x) for x in control]
    return [{
        "variable": variable, "level": MOMENT_MEAN, "k": k,
        "treated_count": len(t), "control_count": len(c),
        "treated_percent": np.nan, "control_percent": np.nan,
        "treated_mean": float(np.mean(t)), "control_mean": float(np.mean(c)),
        "std_diff": standardized_difference(t, c),
    }]


def _variable_rows(members: _Members, variable: str) -> list[dict]:
    by_k: dict[int, tuple[list, list]] = {}
    for matched in members.design.sets:
        try:
            treated = [members.value(matched.treated, variable)]
            control = [members.value(c, variable) for c in matched.controls]
        except (UnresolvableCovariate, MissingEvent):
            continue
        t, c = by_k.setdefault(matched.event_index, ([], []))
        t.extend(treated)
        c.extend(control)

    if not by_k:
        raise UnknownVariable(f"Variable '{variable}' is not available on any matched set")

    rows: list[dict] = []
    for k in sorted(by_k):
        rows.extend(_level_rows(variable, k, *by_k[k]))
    pooled_t = [x for k in sorted(by_k) for x in by_k[k][0]]
    pooled_c = [x for k in sorted(by_k) for x in by_k[k][1]]
    rows.extend(_level_rows(variable, POOLED_K, pooled_t, pooled_c))
    return rows


def _assert_exact(rows: list[dict], variable: str, n_controls: int) -> None:
    for row in rows:
        if row["k"] == POOLED_K or row["level"] == MOMENT_MEAN:
            continue
        if (row["control_count"] != n_controls * row["treated_count"]
                or row["treated_percent"] != row["control_percent"]):
            raise BalanceViolation(
                f"Exact variable '{variable}' unbalanced at k={row['k']}, level {row['level']}: "
                f"{row['treated_count']} treated vs {row['control_count']} controls"
            )


def balance_table(design: MatchDesign, cohort: Sequence[SubjectHistory],
                  variables: Sequence[str], threads: Optional[int] = None) -> BalanceTable:
    """
    Per-k and pooled balance of history covariates between treated and controls.

    Numeric values are summarized by means, categorical ones by counts and percents.
    Exact-matched variables are checked for perfect balance.

    Args:
        design: Matched design.
        cohort: Subjects of the design.
        variables: Covariate names, or names of the design's exact variables.
        threads: Worker threads across variables.

    Returns:
        The balance table.
    """
    members = _Members(design, cohort)
    n_controls = design.set_size - 1
    with ThreadPoolExecutor(max_workers=threads or resolve_threads()) as pool:
        results = list(pool.map(lambda v: _variable_rows(members, v), variables))

    rows: list[dict] = []
    for variable, variable_rows in zip(variables, results):
        if variable in members.exact:
            _assert_exact(variable_rows, variable, n_controls)
        rows.extend(variable_rows)
    logger.info(f"Balance table: {len(rows)} rows over {len(variables)} variables")
    return BalanceTable(pd.DataFrame(rows, columns=BALANCE_COLUMNS))


def _outcomes_by_arm(members: _Members, name: str) -> tuple[list[float], list[float]]:
    treated: list[float] = []
    control: list[float] = []
    for matched in members.design.sets:
        treated.append(members.outcome(matched.treated, name))
        control.extend(members.outcome(c, name) for c in matched.controls)
    return treated, control


def qq_data(design: MatchDesign, cohort: Sequence[SubjectHistory],
            outcome_name: str) -> list[tuple[float, float]]:
    """
    Sorted treated outcomes against control quantiles of equal rank.

    The i-th of n treated order statistics is paired with the type-7 quantile of
    the pooled controls at i / (n - 1).

    Args:
        design: Matched design.
        cohort: Subjects carrying the outcome.
        outcome_name: Outcome to compare.

    Returns:
        (treated_quantile, control_quantile) pairs.
    """
    treated, control = _outcomes_by_arm(_Members(design, cohort), outcome_name)
    treated_sorted = np.sort(np.asarray(treated))
    n = treated_sorted.size
    probs = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
    control_q = np.quantile(np.asarray(control), probs, method="linear")
    return [(float(t), float(c)) for t, c in zip(treated_sorted, control_q)]


def five_number_summary(values: Sequence[float]) -> dict[str, float]:
    """Minimum, Tukey hinges, median and maximum."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("Five-number summary of no values")

    def at_depth(ordered: np.ndarray, depth: float) -> float:
        low = int(math.floor(depth)) - 1
        high = int(math.ceil(depth)) - 1
        return float((ordered[low] + ordered[high]) / 2)

    median_depth = (n + 1) / 2
    hinge_depth = (math.floor(median_depth) + 1) / 2
    return {
        "min": float(x[0]),
        "q1": at_depth(x, hinge_depth),
        "median": at_depth(x, median_depth),
        "q3": at_depth(x[::-1], hinge_depth),
        "max": float(x[-1]),
    }


def _boxplots(members: _Members, value_of) -> list[dict]:
    groups: dict[tuple[int, str], list[float]] = {}
    for matched in members.design.sets:
        for member in matched.members:
            arm = ARM_TREATED if member == matched.treated else ARM_CONTROL
            groups.setdefault((matched.event_index, arm), []).append(value_of(member, arm))
    boxes = []
    for (k, arm) in sorted(groups):
        summary = five_number_summary(groups[(k, arm)])
        boxes.append({"k": k, "arm": arm, "n": len(groups[(k, arm)]), **summary})
    return boxes


def outcome_boxplot_data(design: MatchDesign, cohort: Sequence[SubjectHistory],
                         outcome_name: str) -> list[dict]:
    """Five-number summaries of an outcome per (k, arm)."""
    members = _Members(design, cohort)
    return _boxplots(members, lambda member, arm: members.outcome(member, outcome_name))


def residual_boxplot_data(design: MatchDesign, cohort: Sequence[SubjectHistory],
                          outcome: str, tau0: float) -> list[dict]:
    """Five-number summaries of max(0, R - (1 - Z) tau0) per (k, arm)."""
    members = _Members(design, cohort)

    def adjusted(member: str, arm: str) -> float:
        value = members.outcome(member, outcome)
        return value if arm == ARM_TREATED else max(0.0, value - tau0)

    return _boxplots(members, adjusted)


def describe_set(design: MatchDesign, cohort: Sequence[SubjectHistory], set_id: int,
                 variables: Sequence[str]) -> pd.DataFrame:
    """
    Member-by-variable table of one matched set, treated first.

    Args:
        design: Matched design.
        cohort: Subjects of the design.
        set_id: Set to describe.
        variables: Covariate or outcome names.

    Returns:
        One row per member.
    """
    matched = next((s for s in design.sets if s.set_id == set_id), None)
    if matched is None:
        raise KeyError(f"No matched set {set_id}")
    members = _Members(design, cohort)

    rows = []
    for member in matched.members:
        row = {"subject_id": member,
               "arm": ARM_TREATED if member == matched.treated else ARM_CONTROL}
        for variable in variables:
            try:
                row[variable] = members.value(member, variable)
            except (UnresolvableCovariate, MissingEvent):
                try:
                    row[variable] = members.outcome(member, variable)
                except MissingOutcome:
                    raise UnknownVariable(f"Variable '{variable}' unknown for subject {member}") from None
        rows.append(row)
    return pd.DataFrame(rows, columns=["subject_id", "arm", *variables])
