"""Risk-set matching: roll forward over event indices, stratify exactly, assign optimally."""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .core_model import (
    HistoryView, MatchedSet, StratumKey, SubjectHistory,
    find_overlap, history_view, validate_cohort,
)
from .distance import DistanceMatrix, DistanceSpec, robust_mahalanobis
from .errors import ConfigError, InfeasibleDesign, InfeasibleStratum, SchemaError, TooLarge
from .logger import setup_logger
from .utils import (
    ARM_CONTROL, ARM_TREATED, BRUTE_FORCE_LIMIT, DISTANCE_SCALE, REASON_INSUFFICIENT,
    SOLVER_ASSIGN, SOLVER_FLOW, SUBSET_ENUMERATION_LIMIT, resolve_threads,
)

logger = setup_logger(__name__)

Predicate = Callable[[HistoryView], bool]

_SOURCE   = ("source", "")
_SINK     = ("sink", "")
_OVERFLOW = ("overflow", "")


@dataclass(frozen=True)
class StateRule:
    """
    Eligibility by event state.

    Attributes:
        states: States allowed at event k.
        history_all_of: Each group must be hit by some event at or before k.
        history_none_of: States that must not occur before k.
    """
    states: frozenset[int]
    history_all_of: tuple[frozenset[int], ...] = ()
    history_none_of: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", frozenset(self.states))
        object.__setattr__(
            self, "history_all_of", tuple(frozenset(group) for group in self.history_all_of)
        )
        object.__setattr__(self, "history_none_of", frozenset(self.history_none_of))

    def __call__(self, view: HistoryView) -> bool:
        if view.state not in self.states:
            return False
        through = set(view.states_through())
        if any(not (group & through) for group in self.history_all_of):
            return False
        return not (self.history_none_of & set(view.states_before()))

    @property
    def has_history_constraints(self) -> bool:
        return bool(self.history_all_of or self.history_none_of)

    def to_dict(self) -> dict:
        return {
            "states": sorted(self.states),
            "history_all_of": [sorted(group) for group in self.history_all_of],
            "history_none_of": sorted(self.history_none_of),
        }

    @staticmethod
    def from_dict(data: dict) -> "StateRule":
        return StateRule(
            states=frozenset(data.get("states", [])),
            history_all_of=tuple(frozenset(g) for g in data.get("history_all_of", [])),
            history_none_of=frozenset(data.get("history_none_of", [])),
        )


@dataclass(frozen=True)
class ExactVariable:
    """An exact-match variable, optionally binning a numeric history value."""
    name: str
    source: Optional[str] = None
    breaks: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.breaks is not None:
            breaks = tuple(float(b) for b in self.breaks)
            if list(breaks) != sorted(set(breaks)):
                raise ConfigError(f"Breaks of '{self.name}' must increase strictly")
            object.__setattr__(self, "breaks", breaks)

    def value(self, view: HistoryView) -> str:
        raw = view.value(self.source or self.name)
        if self.breaks is None:
            return str(raw)
        position = int(np.searchsorted(self.breaks, float(raw), side="right"))
        lower = self.breaks[position - 1] if position > 0 else -math.inf
        upper = self.breaks[position] if position < len(self.breaks) else math.inf
        return f"[{lower:g},{upper:g})"

    def to_dict(self) -> dict:
        data: dict = {"name": self.name}
        if self.source is not None:
            data["source"] = self.source
        if self.breaks is not None:
            data["breaks"] = list(self.breaks)
        return data

    @staticmethod
    def from_config(data: Union[str, dict]) -> "ExactVariable":
        if isinstance(data, str):
            return ExactVariable(name=data)
        breaks = data.get("breaks")
        return ExactVariable(
            name=data["name"],
            source=data.get("source"),
            breaks=tuple(breaks) if breaks is not None else None,
        )


@dataclass(frozen=True)
class EligibilitySpec:
    treated_predicate: Predicate
    control_predicate: Predicate
    exact_variables: tuple[ExactVariable, ...] = ()
    set_size: int = 2
    k_range: tuple[int, ...] = (1,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "exact_variables", tuple(self.exact_variables))
        object.__setattr__(self, "k_range", tuple(self.k_range))
        if self.set_size < 2:
            raise ConfigError(f"Set size J must be at least 2, got {self.set_size}")
        if not self.k_range or list(self.k_range) != sorted(set(self.k_range)):
            raise ConfigError(f"k_range must be nonempty and ascending, got {self.k_range}")
        treated, control = self.treated_predicate, self.control_predicate
        if (
            isinstance(treated, StateRule) and isinstance(control, StateRule)
            and treated.states & control.states
            and not (treated.has_history_constraints or control.has_history_constraints)
        ):
            raise ConfigError("Treated and control rules select the same states")

    @property
    def n_controls(self) -> int:
        return self.set_size - 1

    def classify(self, view: HistoryView) -> Optional[str]:
        """Arm of a view at its event k, or None when it is neither."""
        is_treated = self.treated_predicate(view)
        is_control = self.control_predicate(view)
        if is_treated and is_control:
            raise ConfigError(
                f"Subject {view.subject_id} at k={view.k} satisfies both treated and control rules"
            )
        if is_treated:
            return ARM_TREATED
        if is_control:
            return ARM_CONTROL
        return None

    def stratum_key(self, view: HistoryView) -> StratumKey:
        return StratumKey(view.k, tuple(var.value(view) for var in self.exact_variables))


@dataclass(frozen=True)
class UnmatchedTreated:
    subject_id: str
    k: int
    reason: str


@dataclass(frozen=True)
class MatchDesign:
    """The nonoverlapping matched sets and a record of treated units left out."""
    sets: tuple[MatchedSet, ...]
    unmatched_treated: tuple[UnmatchedTreated, ...] = ()
    config_echo: Optional[tuple[EligibilitySpec, DistanceSpec]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sets", tuple(self.sets))
        object.__setattr__(self, "unmatched_treated", tuple(self.unmatched_treated))
        duplicate = find_overlap(self.sets)
        if duplicate is not None:
            raise SchemaError(f"Subject {duplicate} appears in more than one matched set")

    @property
    def objective(self) -> float:
        return sum(matched.total_distance for matched in self.sets)

    @property
    def set_size(self) -> int:
        sizes = {matched.size for matched in self.sets}
        if len(sizes) != 1:
            raise InfeasibleDesign(f"Matched sets must share one size, got {sorted(sizes)}")
        return sizes.pop()

    def summary(self) -> dict[int, int]:
        """Number of matched sets formed at each event index."""
        counts: dict[int, int] = {}
        for matched in self.sets:
            counts[matched.event_index] = counts.get(matched.event_index, 0) + 1
        return dict(sorted(counts.items()))

    def arm_of(self) -> dict[str, tuple[int, str]]:
        """Subject id to (set_id, arm)."""
        arms: dict[str, tuple[int, str]] = {}
        for matched in self.sets:
            arms[matched.treated] = (matched.set_id, ARM_TREATED)
            for control in matched.controls:
                arms[control] = (matched.set_id, ARM_CONTROL)
        return arms


def _scaled(distance: float) -> int:
    return int(round(distance * DISTANCE_SCALE))


def _objective(assignment: dict[str, list[str]], D: DistanceMatrix) -> float:
    return sum(
        sum(D.distance(t, c) for c in controls) for t, controls in assignment.items()
    )


def _flow_graph(treated: Sequence[str], controls: Sequence[str], D: DistanceMatrix,
                n_controls: int, n_kept: int) -> nx.DiGraph:
    graph = nx.DiGraph()
    supply = len(treated) * n_controls
    graph.add_node(_SOURCE, demand=-supply)
    for t in treated:
        graph.add_node(("t", t))
    for c in controls:
        graph.add_node(("c", c))
    graph.add_node(_SINK, demand=n_kept * n_controls)

    overflow = supply - n_kept * n_controls
    if overflow:
        graph.add_node(_OVERFLOW, demand=overflow)

    big = (max((_scaled(x) for x in D.entries[~D.forbidden]), default=0) + 1) * max(n_controls, 1)

    for t in treated:
        graph.add_edge(_SOURCE, ("t", t), capacity=n_controls, weight=0)
        for c in controls:
            if not D.is_forbidden(t, c):
                graph.add_edge(("t", t), ("c", c), capacity=1, weight=_scaled(D.distance(t, c)))
        if overflow:
            graph.add_edge(("t", t), _OVERFLOW, capacity=n_controls, weight=big)
    for c in controls:
        graph.add_edge(("c", c), _SINK, capacity=1, weight=0)
    return graph


def _solve_flow(treated: Sequence[str], controls: Sequence[str], D: DistanceMatrix,
                n_controls: int) -> dict[str, list[str]]:
    graph = _flow_graph(treated, controls, D, n_controls, len(treated))
    try:
        _, flow = nx.network_simplex(graph)
    except nx.NetworkXUnfeasible as e:
        raise InfeasibleStratum(f"No feasible assignment: {e}") from e
    return {t: [c for c in controls if flow[("t", t)].get(("c", c), 0) == 1] for t in treated}


def _solve_assignment(treated: Sequence[str], controls: Sequence[str], D: DistanceMatrix,
                      n_controls: int) -> dict[str, list[str]]:
    sub = D.within(treated, controls)
    cost = np.repeat(sub.entries, n_controls, axis=0)
    blocked = np.repeat(sub.forbidden, n_controls, axis=0)
    penalty = (cost[~blocked].sum() + 1.0) * 2.0 if (~blocked).any() else 1.0
    rows, cols = linear_sum_assignment(np.where(blocked, penalty, cost))
    if len(rows) < len(treated) * n_controls or blocked[rows, cols].any():
        raise InfeasibleStratum("No feasible assignment without forbidden pairs")
    assignment: dict[str, list[str]] = {t: [] for t in treated}
    for row, col in zip(rows, cols):
        assignment[treated[row // n_controls]].append(controls[col])
    return {t: sorted(cs) for t, cs in assignment.items()}


def _solve(treated: Sequence[str], controls: Sequence[str], D: DistanceMatrix,
           n_controls: int, solver: str) -> dict[str, list[str]]:
    if solver == SOLVER_FLOW:
        return _solve_flow(treated, controls, D, n_controls)
    if solver == SOLVER_ASSIGN:
        return _solve_assignment(treated, controls, D, n_controls)
    raise ConfigError(f"Unknown solver '{solver}'")


def _relaxed_subset(treated: Sequence[str], controls: Sequence[str], D: DistanceMatrix,
                    n_controls: int, n_kept: int) -> list[str]:
    """Rank treated units by an overflow-relaxed flow and keep the best n_kept."""
    graph = _flow_graph(treated, controls, D, n_controls, n_kept)
    try:
        _, flow = nx.network_simplex(graph)
    except nx.NetworkXUnfeasible as e:
        raise InfeasibleStratum(f"No feasible assignment: {e}") from e

    def rank(t: str) -> tuple[int, float, str]:
        matched = [c for c in controls if flow[("t", t)].get(("c", c), 0) == 1]
        return (-len(matched), sum(D.distance(t, c) for c in matched), t)

    return sorted(sorted(treated, key=rank)[:n_kept])


def _to_sets(assignment: dict[str, list[str]], D: DistanceMatrix,
             stratum_key: StratumKey, start_id: int) -> list[MatchedSet]:
    return [
        MatchedSet(
            set_id=start_id + offset,
            event_index=stratum_key.event_index,
            stratum_key=stratum_key,
            treated=t,
            controls=tuple(controls),
            total_distance=sum(D.distance(t, c) for c in controls),
            control_distances=tuple(D.distance(t, c) for c in controls),
        )
        for offset, (t, controls) in enumerate(sorted(assignment.items()))
    ]


def optimal_stratum_match(
    treated: Sequence[str],
    controls: Sequence[str],
    D: DistanceMatrix,
    J: int,
    stratum_key: Optional[StratumKey] = None,
    start_id: int = 1,
    solver: str = SOLVER_FLOW,
) -> list[MatchedSet]:
    """
    Nonoverlapping 1:(J-1) sets minimizing the total treated-to-control distance.

    With too few controls for every treated unit, the largest feasible number of
    treated units is matched at minimum cost and the rest are left out.

    Args:
        treated: Treated subject ids.
        controls: Control subject ids.
        D: Distances, rows treated, columns controls.
        J: Set size.
        stratum_key: Stratum of all units; event index 0 when omitted.
        start_id: Id given to the first set.
        solver: `flow` (network simplex) or `assignment`.

    Returns:
        Matched sets ordered by treated id.
    """
    stratum_key = stratum_key or StratumKey(0)
    treated, controls = sorted(treated), sorted(controls)
    if not treated:
        return []
    n_controls = J - 1
    n_kept = min(len(treated), len(controls) // n_controls)
    if n_kept == 0:
        raise InfeasibleStratum(
            f"Stratum {stratum_key.label()}: {len(controls)} controls cannot fill a set of {J}"
        )

    if n_kept == len(treated):
        return _to_sets(_solve(treated, controls, D, n_controls, solver), D, stratum_key, start_id)

    if math.comb(len(treated), n_kept) > SUBSET_ENUMERATION_LIMIT:
        logger.warning(
            f"Stratum {stratum_key.label()}: choosing {n_kept} of {len(treated)} treated "
            f"units by relaxed flow, optimality not guaranteed"
        )
        subset = _relaxed_subset(treated, controls, D, n_controls, n_kept)
        return _to_sets(_solve(subset, controls, D, n_controls, solver), D, stratum_key, start_id)

    best: Optional[dict[str, list[str]]] = None
    best_cost = math.inf
    for subset in itertools.combinations(treated, n_kept):
        try:
            assignment = _solve(subset, controls, D, n_controls, solver)
        except InfeasibleStratum:
            continue
        cost = _objective(assignment, D)
        if cost < best_cost:
            best, best_cost = assignment, cost
    if best is None:
        raise InfeasibleStratum(f"Stratum {stratum_key.label()}: no feasible subset")
    return _to_sets(best, D, stratum_key, start_id)


def brute_force_stratum_match(
    treated: Sequence[str],
    controls: Sequence[str],
    D: DistanceMatrix,
    J: int,
    stratum_key: Optional[StratumKey] = None,
    start_id: int = 1,
) -> list[MatchedSet]:
    """Exhaustive counterpart of optimal_stratum_match, for small strata."""
    stratum_key = stratum_key or StratumKey(0)
    treated, controls = sorted(treated), sorted(controls)
    if not treated:
        return []
    n_controls = J - 1
    n_kept = min(len(treated), len(controls) // n_controls)
    if n_kept == 0:
        raise InfeasibleStratum(f"{len(controls)} controls cannot fill a set of {J}")

    candidates = math.comb(len(treated), n_kept) * math.prod(
        math.comb(len(controls) - i * n_controls, n_controls) for i in range(n_kept)
    )
    if candidates > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{candidates} candidate partitions exceed {BRUTE_FORCE_LIMIT}")

    best: Optional[dict[str, list[str]]] = None
    best_cost = math.inf

    def extend(units: tuple[str, ...], remaining: tuple[str, ...],
               partial: dict[str, list[str]]) -> None:
        nonlocal best, best_cost
        if not units:
            cost = _objective(partial, D)
            if cost < best_cost:
                best, best_cost = dict(partial), cost
            return
        head, rest = units[0], units[1:]
        for group in itertools.combinations(remaining, n_controls):
            if any(D.is_forbidden(head, c) for c in group):
                continue
            partial[head] = list(group)
            extend(rest, tuple(c for c in remaining if c not in group), partial)
            del partial[head]

    for subset in itertools.combinations(treated, n_kept):
        extend(subset, tuple(controls), {})

    if best is None:
        raise InfeasibleStratum("No feasible partition without forbidden pairs")
    return _to_sets(best, D, stratum_key, start_id)


def _match_stratum(
    key: StratumKey,
    treated: list[HistoryView],
    controls: list[HistoryView],
    elig: EligibilitySpec,
    dist: DistanceSpec,
    solver: str,
) -> tuple[list[MatchedSet], list[UnmatchedTreated]]:
    treated_ids = [view.subject_id for view in treated]
    if len(controls) < elig.n_controls:
        logger.warning(
            f"Stratum {key.label()}: {len(treated)} treated dropped, "
            f"only {len(controls)} controls"
        )
        return [], [UnmatchedTreated(t, key.event_index, REASON_INSUFFICIENT) for t in treated_ids]

    D = robust_mahalanobis(treated, controls, dist)
    try:
        sets = optimal_stratum_match(
            treated_ids, [view.subject_id for view in controls], D, elig.set_size,
            stratum_key=key, solver=solver,
        )
    except InfeasibleStratum as e:
        logger.warning(f"{e}")
        sets = []

    matched = {s.treated for s in sets}
    unmatched = [
        UnmatchedTreated(t, key.event_index, REASON_INSUFFICIENT)
        for t in sorted(treated_ids) if t not in matched
    ]
    if unmatched:
        logger.warning(f"Stratum {key.label()}: {len(unmatched)} treated left unmatched")
    return sets, unmatched


def build_risk_set_match(
    cohort: Sequence[SubjectHistory],
    elig: EligibilitySpec,
    dist: DistanceSpec,
    solver: str = SOLVER_FLOW,
    threads: Optional[int] = None,
) -> MatchDesign:
    """
    Build the nonoverlapping risk-set matched design.

    Event indices are processed in ascending order; at each k the subjects not yet
    matched that have a k-th event are classified, stratified exactly, and matched
    optimally within strata. Matched subjects leave every later risk set.

    Args:
        cohort: Subjects.
        elig: Eligibility rules, exact variables, J and the event indices.
        dist: Distance covariates.
        solver: Assignment solver.
        threads: Worker threads for strata; ISOLATE_THREADS or the hardware by default.

    Returns:
        The matched design.
    """
    if not cohort:
        raise InfeasibleDesign("Cohort is empty")
    index = validate_cohort(cohort)
    available = sorted(index)
    workers = threads or resolve_threads()

    sets: list[MatchedSet] = []
    unmatched: list[UnmatchedTreated] = []

    for k in elig.k_range:
        strata: dict[StratumKey, tuple[list[HistoryView], list[HistoryView]]] = {}
        for subject_id in available:
            subject = index[subject_id]
            if subject.n_events < k:
                continue
            view = history_view(subject, k)
            arm = elig.classify(view)
            if arm is None:
                continue
            treated, controls = strata.setdefault(elig.stratum_key(view), ([], []))
            (treated if arm == ARM_TREATED else controls).append(view)

        keys = [key for key in sorted(strata) if strata[key][0]]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda key: _match_stratum(key, *strata[key], elig, dist, solver), keys
            ))

        formed = 0
        for stratum_sets, stratum_unmatched in results:
            for matched in stratum_sets:
                sets.append(replace(matched, set_id=len(sets) + 1))
                formed += 1
            unmatched.extend(stratum_unmatched)

        used = {member for matched in sets for member in matched.members}
        available = [subject_id for subject_id in available if subject_id not in used]
        logger.info(f"k={k}: {formed} matched sets formed in {len(keys)} strata")

    return MatchDesign(sets=tuple(sets), unmatched_treated=tuple(unmatched),
                       config_echo=(elig, dist))
