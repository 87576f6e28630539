"""Synthetic longitudinal cohorts with a hidden latent covariate and a known effect."""

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Optional

import numpy as np
from scipy.special import expit

from .core_model import (
    EventRecord, MatchedSet, StratumKey, SubjectHistory, impute_education_at_event
)
from .errors import ConfigError
from .logger import setup_logger
from .riskset_matcher import MatchDesign
from .utils import MODEL_RATIO, MODEL_TOBIT

logger = setup_logger(__name__)

LATENT_UNIFORM = "uniform"
LATENT_BINARY  = "binary"

OUTCOME_NAME = "work_fraction"
DOSE_NAME    = "n_children"

RACES   = ("1", "2", "3", "4")
REGIONS = ("1", "2", "3", "4")

# Control-outcome model
BASE_OUTCOME  = 0.4
LATENT_SLOPE  = 0.2
OUTCOME_NOISE = 0.18
EXTRA_EVENTS  = 0.3


@dataclass(frozen=True)
class SimSpec:
    """
    Parameters of the generative story.

    Attributes:
        n_subjects: Cohort size.
        n_states: Number K of point states.
        treated_state: State s of the differential comparison.
        control_state: State s' of the differential comparison.
        background_state: State of every non-differential event.
        n_periods: Discrete periods (years) at risk.
        age_start: Age at the first period.
        alpha0: Logit of the per-period event hazard at u = 0.
        alpha_u: Slope of that logit in u; the timing bias.
        max_events: Events after which a subject stops.
        p_differential: Chance that an event from index 2 on is differential.
        gamma_true: Log-odds of s over s' per unit of u.
        state_intercept: Log-odds of s over s' at u = 0.
        latent: `uniform` on [0, 1] or `binary` in {0, 1}.
        effect_model: `tobit` or `ratio` (proportional).
        tau: Tobit effect, r_T = max(0, r_C - tau).
        beta: Proportional effect, r_T - r_C = beta (d_T - d_C).
        set_size: J for known-structure designs.
        seed: Root seed; subject i draws from the stream spawned with key i.
    """
    n_subjects: int = 1000
    n_states: int = 3
    treated_state: int = 3
    control_state: int = 2
    background_state: int = 1
    n_periods: int = 25
    age_start: float = 18.0
    alpha0: float = -1.5
    alpha_u: float = 1.0
    max_events: int = 4
    p_differential: float = 0.1
    gamma_true: float = 0.0
    state_intercept: float = 0.0
    latent: str = LATENT_UNIFORM
    effect_model: str = MODEL_TOBIT
    tau: float = 0.0
    beta: float = 0.0
    set_size: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_subjects < 0:
            raise ConfigError(f"n_subjects must be nonnegative, got {self.n_subjects}")
        states = (self.treated_state, self.control_state, self.background_state)
        if any(not 1 <= state <= self.n_states for state in states):
            raise ConfigError(f"States {states} must lie in 1..{self.n_states}")
        if self.treated_state == self.control_state:
            raise ConfigError("Treated and control states must differ")
        if self.background_state in (self.treated_state, self.control_state):
            raise ConfigError("Background state must differ from the differential states")
        if self.n_periods < 1 or self.max_events < 1:
            raise ConfigError("n_periods and max_events must be positive")
        if self.age_start <= 6:
            raise ConfigError(f"age_start must exceed 6, got {self.age_start}")
        if not 0 <= self.p_differential <= 1:
            raise ConfigError(f"p_differential must lie in [0, 1], got {self.p_differential}")
        if self.latent not in (LATENT_UNIFORM, LATENT_BINARY):
            raise ConfigError(f"Unknown latent distribution '{self.latent}'")
        if self.effect_model not in (MODEL_TOBIT, MODEL_RATIO):
            raise ConfigError(f"Unknown effect model '{self.effect_model}'")
        if self.set_size < 2:
            raise ConfigError(f"set_size must be at least 2, got {self.set_size}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "SimSpec":
        known = {f.name for f in fields(SimSpec)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown simulation keys: {sorted(unknown)}")
        return SimSpec(**data)


@dataclass(frozen=True)
class Simulation:
    """A cohort and its counterfactual bookkeeping, kept apart from the cohort."""
    cohort: list[SubjectHistory]
    truth: dict[str, Any]


def _rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def _latent(rng: np.random.Generator, spec: SimSpec) -> float:
    if spec.latent == LATENT_BINARY:
        return float(rng.integers(0, 2))
    return float(rng.random())


def _potential_outcomes(rng: np.random.Generator, u: float, n_events: int,
                        spec: SimSpec) -> dict[str, float]:
    r_c = BASE_OUTCOME + LATENT_SLOPE * (u - 0.5) + rng.normal(0.0, OUTCOME_NOISE)
    r_c = min(max(r_c, 0.0), 1.0)
    d_c, d_t = float(n_events), float(n_events + 1)
    if spec.effect_model == MODEL_TOBIT:
        r_t = max(0.0, r_c - spec.tau)
    else:
        r_t = r_c + spec.beta * (d_t - d_c)
    return {"r_C": r_c, "r_T": r_t, "d_C": d_c, "d_T": d_t}


def _observed(truth: dict[str, float], z: int) -> dict[str, float]:
    return {
        OUTCOME_NAME: truth["r_T"] if z else truth["r_C"],
        DOSE_NAME: truth["d_T"] if z else truth["d_C"],
    }


def _events(times: np.ndarray, states: list[int], education: float) -> tuple[EventRecord, ...]:
    return tuple(
        EventRecord(
            event_index=j,
            event_time=float(time),
            state=state,
            tv_covariates={"education": impute_education_at_event(education, float(time))},
        )
        for j, (time, state) in enumerate(zip(times, states), start=1)
    )


def _fixed(rng: np.random.Generator) -> tuple[dict[str, str], float]:
    fixed = {"race": str(rng.choice(RACES)), "region": str(rng.choice(REGIONS))}
    return fixed, float(rng.integers(8, 17))


def _simulate_subject(i: int, spec: SimSpec) -> tuple[SubjectHistory, dict[str, Any]]:
    rng = _rng(spec.seed, i)
    u = _latent(rng, spec)
    fixed, education = _fixed(rng)

    hazard = expit(spec.alpha0 + spec.alpha_u * u)
    periods = np.flatnonzero(rng.random(spec.n_periods) < hazard)[:spec.max_events]
    times = spec.age_start + periods + rng.random(len(periods))

    states: list[int] = []
    differential: Optional[int] = None
    z = 0
    p_s = expit(spec.state_intercept + spec.gamma_true * u)
    for j in range(1, len(times) + 1):
        if differential is None and j >= 2 and rng.random() < spec.p_differential:
            differential = j
            z = int(rng.random() < p_s)
            states.append(spec.treated_state if z else spec.control_state)
        else:
            states.append(spec.background_state)

    truth = _potential_outcomes(rng, u, len(times), spec)
    subject = SubjectHistory(
        subject_id=f"S{i:06d}",
        fixed_covariates=fixed,
        events=_events(times, states, education),
        outcomes=_observed(truth, z),
    )
    truth.update({"u": u, "z": z, "differential_k": differential})
    return subject, truth


def simulate(spec: SimSpec) -> Simulation:
    """
    Generate a cohort whose event timing and differential states depend on a latent u.

    Args:
        spec: Simulation parameters.

    Returns:
        The cohort and a truth record holding u, Z and the potential outcomes.
    """
    cohort: list[SubjectHistory] = []
    subjects: dict[str, Any] = {}
    for i in range(spec.n_subjects):
        subject, truth = _simulate_subject(i, spec)
        cohort.append(subject)
        subjects[subject.subject_id] = truth
    n_treated = sum(truth["z"] for truth in subjects.values())
    logger.info(f"Simulated {spec.n_subjects} subjects, {n_treated} with state {spec.treated_state}")
    return Simulation(cohort=cohort, truth={"spec": spec.to_dict(), "subjects": subjects})


def simulate_cohort(spec: SimSpec) -> list[SubjectHistory]:
    return simulate(spec).cohort


def _simulate_set(i: int, spec: SimSpec, k: int) -> tuple[list[SubjectHistory], MatchedSet, dict]:
    rng = _rng(spec.seed, i)
    J = spec.set_size
    fixed, education = _fixed(rng)
    times = spec.age_start + np.sort(rng.choice(spec.n_periods, size=k, replace=False)) + 0.5

    u = np.array([_latent(rng, spec) for _ in range(J)])
    weights = np.exp(spec.gamma_true * u)
    treated_position = int(rng.choice(J, p=weights / weights.sum()))

    ids = [f"M{i + 1:06d}_{j}" for j in range(J)]
    members: list[SubjectHistory] = []
    truths: dict[str, Any] = {}
    for j in range(J):
        z = int(j == treated_position)
        extra = int(rng.poisson(EXTRA_EVENTS))
        later = times[-1] + np.arange(1, extra + 1)
        states = [spec.background_state] * (k - 1)
        states.append(spec.treated_state if z else spec.control_state)
        states.extend([spec.background_state] * extra)
        truth = _potential_outcomes(rng, float(u[j]), k + extra, spec)
        members.append(SubjectHistory(
            subject_id=ids[j],
            fixed_covariates=dict(fixed),
            events=_events(np.concatenate([times, later]), states, education),
            outcomes=_observed(truth, z),
        ))
        truth.update({"u": float(u[j]), "z": z, "differential_k": k})
        truths[ids[j]] = truth

    key = StratumKey(k, ())
    matched = MatchedSet(
        set_id=i + 1,
        event_index=k,
        stratum_key=key,
        treated=ids[treated_position],
        controls=tuple(sorted(ids[j] for j in range(J) if j != treated_position)),
        total_distance=0.0,
    )
    return members, matched, truths


def simulate_design(spec: SimSpec, n_sets: int,
                    k: int = 2) -> tuple[list[SubjectHistory], MatchDesign, dict[str, Any]]:
    """
    Generate matched sets of J subjects with identical observed histories through k.

    Within a set the treated member is drawn with probability proportional to
    exp(gamma_true * u), so the design satisfies the sensitivity model at
    Gamma = exp(gamma_true) when u lies in [0, 1].

    Args:
        spec: Simulation parameters; n_subjects is ignored.
        n_sets: Number of matched sets.
        k: Event index of the differential event.

    Returns:
        (cohort, design, truth)
    """
    if n_sets < 1:
        raise ConfigError(f"n_sets must be positive, got {n_sets}")
    if not 1 <= k <= spec.n_periods:
        raise ConfigError(f"k must lie in 1..{spec.n_periods}, got {k}")

    cohort: list[SubjectHistory] = []
    sets: list[MatchedSet] = []
    subjects: dict[str, Any] = {}
    for i in range(n_sets):
        members, matched, truths = _simulate_set(i, spec, k)
        cohort.extend(members)
        sets.append(matched)
        subjects.update(truths)

    logger.info(f"Simulated {n_sets} matched sets of size {spec.set_size} at k={k}")
    truth = {
        "spec": spec.to_dict(),
        "gamma": math.exp(spec.gamma_true),
        "subjects": subjects,
    }
    return cohort, MatchDesign(sets=tuple(sets)), truth
