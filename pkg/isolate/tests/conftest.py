import pytest
from unittest import mock
from typing import Optional, Sequence

from src.core_model import EventRecord, SubjectHistory
from src.distance import DistanceSpec
from src.riskset_matcher import EligibilitySpec, ExactVariable, StateRule

TREATED_STATE    = 3
CONTROL_STATE    = 2
BACKGROUND_STATE = 1


def make_subject(
    subject_id: str,
    events: Sequence[tuple[float, int]],
    fixed: Optional[dict] = None,
    outcomes: Optional[dict] = None,
    tv: Optional[Sequence[dict]] = None,
) -> SubjectHistory:
    """Build a subject from (time, state) pairs."""
    return SubjectHistory(
        subject_id=subject_id,
        fixed_covariates=fixed or {},
        events=tuple(
            EventRecord(j, time, state, (tv[j - 1] if tv else {}))
            for j, (time, state) in enumerate(events, start=1)
        ),
        outcomes=outcomes or {},
    )


def fixture_cohort() -> list[SubjectHistory]:
    """
    Twelve subjects, J=3, exact on region, distance on event times.

    At k=2 T1 is matched to C1 and C2; T2 is alone in region B with one control.
    At k=3 X1 (a control candidate at k=2 that was not used) is matched to C4 and C5.
    """
    a, b = {"region": "A"}, {"region": "B"}
    s, c, t = BACKGROUND_STATE, CONTROL_STATE, TREATED_STATE
    rows = [
        ("T1", [(20, s), (22, t)], a, 0.30, 3),
        ("C1", [(20.5, s), (22.5, c)], a, 0.50, 2),
        ("C2", [(21, s), (23, c)], a, 0.40, 2),
        ("X1", [(26, s), (28, c), (30, t)], a, 0.10, 4),
        ("C3", [(27, s), (29, c)], a, 0.60, 2),
        ("T2", [(20, s), (22, t)], b, 0.20, 3),
        ("C7", [(20, s), (22, c)], b, 0.70, 2),
        ("C4", [(26.2, s), (28.5, s), (30.5, c)], a, 0.35, 3),
        ("C5", [(26.5, s), (29, s), (31, c)], a, 0.25, 3),
        ("C6", [(35, s), (38, s), (40, c)], a, 0.55, 3),
        ("N1", [(19, s)], a, 0.45, 1),
        ("N2", [(19, s), (24, s)], a, 0.65, 2),
    ]
    return [
        make_subject(sid, events, fixed, {"work_fraction": wf, "n_children": kids})
        for sid, events, fixed, wf, kids in rows
    ]


def fixture_eligibility(set_size: int = 3, k_range: tuple = (2, 3)) -> EligibilitySpec:
    return EligibilitySpec(
        treated_predicate=StateRule(states={TREATED_STATE}, history_none_of={TREATED_STATE}),
        control_predicate=StateRule(states={CONTROL_STATE}, history_none_of={TREATED_STATE}),
        exact_variables=(ExactVariable("region"),),
        set_size=set_size,
        k_range=k_range,
    )


@pytest.fixture
def cohort() -> list[SubjectHistory]:
    """The twelve-subject matching fixture."""
    return fixture_cohort()


@pytest.fixture
def eligibility() -> EligibilitySpec:
    """Treated state 3, control state 2, exact on region, J=3, k in (2, 3)."""
    return fixture_eligibility()


@pytest.fixture
def distance_spec() -> DistanceSpec:
    """Event times of events 1..k."""
    return DistanceSpec(covariate_names=("event_time_{j}",))


@pytest.fixture
def mock_logger() -> mock.Mock:
    """Create a mock logger."""
    return mock.Mock()
