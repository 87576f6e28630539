"""Longitudinal data model: subjects, event states, histories as of an event, outcomes."""

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Union

from .errors import (
    DomainError, MissingEvent, MissingOutcome, SchemaError, UnresolvableCovariate
)

EVENT_TIME = "event_time"
_INDEXED_NAME = re.compile(r"(.+)_(\d+)")

HOURS_CAP  = 40.0
WEEKS_YEAR = 52.0


@dataclass(frozen=True)
class EventState:
    """A state label; code 0 is the interval state, 1..K are point states."""
    code: int
    display_name: str

    @staticmethod
    def from_mapping(states: Mapping[Any, str]) -> dict[int, "EventState"]:
        """
        Build and validate the state table of a cohort.

        Args:
            states: Mapping of code (int or numeric string) to display name.

        Returns:
            Dictionary of code to EventState.
        """
        table = {int(code): EventState(int(code), name) for code, name in states.items()}
        codes = sorted(table)
        if len(codes) < 2 or codes != list(range(len(codes))):
            raise SchemaError(f"State codes must be dense 0..K with K >= 1, got {codes}")
        return table


@dataclass(frozen=True)
class EventRecord:
    event_index: int
    event_time: float
    state: int
    tv_covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.event_index < 1:
            raise SchemaError(f"Event index must be >= 1, got {self.event_index}")
        if self.state < 1:
            raise SchemaError(
                f"Event {self.event_index} has state {self.state}; code 0 is the interval state"
            )


@dataclass(frozen=True)
class SubjectHistory:
    """One individual: fixed covariates, ordered events and post-event outcomes."""
    subject_id: str
    fixed_covariates: Mapping[str, str] = field(default_factory=dict)
    events: tuple[EventRecord, ...] = ()
    outcomes: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        for position, event in enumerate(self.events, start=1):
            if event.event_index != position:
                raise SchemaError(
                    f"Subject {self.subject_id}: event indices must be 1,2,3,..."
                )
            if position > 1 and event.event_time <= self.events[position - 2].event_time:
                raise SchemaError(
                    f"Subject {self.subject_id}: event times must strictly increase"
                )

    @property
    def n_events(self) -> int:
        return len(self.events)

    def outcome(self, name: str) -> float:
        try:
            return self.outcomes[name]
        except KeyError:
            raise MissingOutcome(f"Subject {self.subject_id} has no outcome '{name}'") from None


@dataclass(frozen=True)
class HistoryView:
    """What was observable about a subject at its k-th event: the past, never the future."""
    subject_id: str
    fixed_covariates: Mapping[str, str]
    events: tuple[EventRecord, ...]
    k: int

    @property
    def state(self) -> int:
        """State of the event at index k."""
        return self.events[self.k - 1].state

    def event(self, j: int) -> EventRecord:
        if j < 1 or j > self.k:
            raise MissingEvent(
                f"Event {j} of subject {self.subject_id} is not visible at k={self.k}"
            )
        return self.events[j - 1]

    def states_before(self) -> tuple[int, ...]:
        return tuple(event.state for event in self.events[:self.k - 1])

    def states_through(self) -> tuple[int, ...]:
        return tuple(event.state for event in self.events)

    def value(self, name: str) -> Union[str, float]:
        """
        Resolve a covariate name on this view.

        A fixed covariate name resolves to its category; `<base>_<j>` to the value of
        `<base>` at event j; a bare `<base>` to its value at event k. `event_time` is
        the time of the event.

        Args:
            name: Covariate name.

        Returns:
            The categorical or numeric value.
        """
        if name in self.fixed_covariates:
            return self.fixed_covariates[name]

        match = _INDEXED_NAME.fullmatch(name)
        if match and not self._has_tv(name):
            base, j = match.group(1), int(match.group(2))
            return self._event_value(self.event(j), base, name)

        return self._event_value(self.event(self.k), name, name)

    def _has_tv(self, name: str) -> bool:
        return name in self.events[self.k - 1].tv_covariates

    def _event_value(self, event: EventRecord, base: str, name: str) -> float:
        if base == EVENT_TIME:
            return event.event_time
        try:
            return event.tv_covariates[base]
        except KeyError:
            raise UnresolvableCovariate(
                f"Covariate '{name}' not available for subject {self.subject_id}"
            ) from None


@dataclass(frozen=True, order=True)
class StratumKey:
    """Exact-match cell: event index plus the exact variables' values."""
    event_index: int
    exact_values: tuple[str, ...] = ()

    def label(self, sep: str = "|") -> str:
        return sep.join((str(self.event_index),) + self.exact_values)


@dataclass(frozen=True)
class MatchedSet:
    """One treated unit and J-1 controls sharing a stratum and an event index."""
    set_id: int
    event_index: int
    stratum_key: StratumKey
    treated: str
    controls: tuple[str, ...]
    total_distance: float = 0.0
    control_distances: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "controls", tuple(self.controls))
        object.__setattr__(self, "control_distances", tuple(self.control_distances))
        if self.control_distances and len(self.control_distances) != len(self.controls):
            raise SchemaError(f"Matched set {self.set_id} needs one distance per control")
        if len(set(self.members)) != len(self.members):
            raise SchemaError(f"Matched set {self.set_id} repeats a member")
        if not self.controls:
            raise SchemaError(f"Matched set {self.set_id} has no controls")
        if self.total_distance < 0:
            raise SchemaError(f"Matched set {self.set_id} has negative distance")
        if self.stratum_key.event_index != self.event_index:
            raise SchemaError(f"Matched set {self.set_id} stratum has another event index")

    @property
    def members(self) -> tuple[str, ...]:
        """Treated first, then controls."""
        return (self.treated,) + self.controls

    @property
    def size(self) -> int:
        return len(self.controls) + 1


def history_view(subject: Union[SubjectHistory, HistoryView], k: int) -> HistoryView:
    """
    Truncate a subject's history at its k-th event, dropping outcomes.

    Args:
        subject: A subject, or an existing view (which can only be truncated further).
        k: Event index, k >= 1.

    Returns:
        The outcome-free, future-free view.
    """
    available = subject.k if isinstance(subject, HistoryView) else subject.n_events
    if k < 1 or available < k:
        raise MissingEvent(
            f"Subject {subject.subject_id} has {available} visible events, asked for k={k}"
        )
    return HistoryView(
        subject_id=subject.subject_id,
        fixed_covariates=subject.fixed_covariates,
        events=tuple(subject.events[:k]),
        k=k,
    )


def impute_education_at_event(total_education: float, age_at_event: float) -> float:
    """Years of education credited at an event: min(E, A - 6)."""
    if total_education < 0:
        raise DomainError(f"Education must be nonnegative, got {total_education}")
    if age_at_event <= 6:
        raise DomainError(f"Age at event must exceed 6, got {age_at_event}")
    return min(total_education, age_at_event - 6)


def work_fraction(hours_last_week: float, weeks_last_year: float) -> float:
    """
    Fraction of full-time work: min(hours, 40) * weeks / (40 * 52).

    Args:
        hours_last_week: Hours worked in the previous week.
        weeks_last_year: Weeks worked in the previous year, at most 52.

    Returns:
        A value in [0, 1].
    """
    if hours_last_week < 0 or weeks_last_year < 0:
        raise DomainError("Hours and weeks must be nonnegative")
    if weeks_last_year > WEEKS_YEAR:
        raise DomainError(f"Weeks worked cannot exceed 52, got {weeks_last_year}")
    fraction = min(hours_last_week, HOURS_CAP) * weeks_last_year / (HOURS_CAP * WEEKS_YEAR)
    return min(max(fraction, 0.0), 1.0)


def validate_cohort(cohort: Iterable[SubjectHistory]) -> dict[str, SubjectHistory]:
    """
    Index a cohort by subject id, rejecting duplicates.

    Args:
        cohort: Subjects.

    Returns:
        Dictionary of subject id to subject.
    """
    index: dict[str, SubjectHistory] = {}
    for subject in cohort:
        if subject.subject_id in index:
            raise SchemaError(f"Duplicate subject_id {subject.subject_id}")
        index[subject.subject_id] = subject
    return index


def find_overlap(sets: Iterable[MatchedSet]) -> Optional[str]:
    """Return a subject id used by more than one matched set, if any."""
    seen: set[str] = set()
    for matched in sets:
        for member in matched.members:
            if member in seen:
                return member
            seen.add(member)
    return None
