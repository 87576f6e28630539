"""Sensitivity analysis for 1:(J-1) matched sets: Gamma bounds, test inversion, amplification."""

import itertools
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from .core_model import SubjectHistory, validate_cohort
from .errors import (
    BracketFailure, ConfigError, DomainError, EmptyDesign, MissingOutcome,
    TooLarge, ZeroDoseEffect,
)
from .logger import setup_logger
from .riskset_matcher import MatchDesign
from .utils import (
    DIR_GREATER, DIR_LESS, EXACT_GRID, EXACT_MAX_ATOMS, EXACT_MAX_SETS,
    MODEL_RATIO, MODEL_TOBIT, STAT_HUBER, STAT_MEAN, resolve_threads,
)

logger = setup_logger(__name__)

Number = Union[float, Fraction]


@dataclass(frozen=True)
class GammaLevel:
    """Sensitivity parameter Gamma = exp(gamma); 1 is the randomization distribution."""
    gamma: float

    def __post_init__(self) -> None:
        if not self.gamma >= 1:
            raise DomainError(f"Gamma must be at least 1, got {self.gamma}")

    @property
    def log_gamma(self) -> float:
        return math.log(self.gamma)

    @property
    def is_randomization(self) -> bool:
        return self.gamma == 1

    def amplify(self, deltas: Optional[Sequence[float]] = None) -> list["AmplificationPoint"]:
        return amplify(self.gamma, deltas)


@dataclass(frozen=True)
class AmplificationPoint:
    """One (Delta, Lambda) pair on the amplification curve of a Gamma."""
    delta: float
    lambda_: float
    parent_gamma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.delta <= 1 or self.lambda_ <= 1:
            raise DomainError(f"Delta and Lambda must exceed 1, got ({self.delta}, {self.lambda_})")
        if self.parent_gamma is not None and not math.isclose(
            self.gamma, self.parent_gamma, rel_tol=1e-12, abs_tol=1e-12
        ):
            raise DomainError(f"({self.delta}, {self.lambda_}) is not on the curve of {self.parent_gamma}")

    @property
    def gamma(self) -> float:
        return amplification_gamma(self.delta, self.lambda_)


@dataclass(frozen=True)
class SetScore:
    """Statistic contribution q_j of each member j were it the treated unit."""
    set_id: int
    q: tuple[Number, ...]
    treated_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", tuple(self.q))
        if len(self.q) < 2:
            raise DomainError(f"Set {self.set_id} needs at least two members")
        if not all(math.isfinite(float(x)) for x in self.q):
            raise DomainError(f"Set {self.set_id} has non-finite scores")

    @property
    def observed(self) -> Number:
        return self.q[self.treated_index]


@dataclass(frozen=True)
class StatisticSpec:
    """Test statistic: treated-minus-control mean, or Huber M-scores."""
    kind: str = STAT_MEAN
    huber_cutoff: float = 2.0
    scale: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in (STAT_MEAN, STAT_HUBER):
            raise ConfigError(f"Unknown statistic kind '{self.kind}'")
        if not self.huber_cutoff > 0:
            raise ConfigError(f"Huber cutoff must be positive, got {self.huber_cutoff}")
        if self.scale is not None and self.scale < 0:
            raise ConfigError(f"Scale must be nonnegative, got {self.scale}")


@dataclass(frozen=True)
class InferenceSettings:
    alpha: float = 0.05
    direction: str = DIR_GREATER
    two_sided: bool = False
    null_value: float = 0.0
    bracket: tuple[float, float] = (-1.0, 1.0)
    tolerance: float = 1e-6
    max_bracket_expansions: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "bracket", tuple(float(b) for b in self.bracket))
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.direction not in (DIR_GREATER, DIR_LESS):
            raise ConfigError(f"Unknown direction '{self.direction}'")
        if len(self.bracket) != 2 or not self.bracket[0] < self.bracket[1]:
            raise ConfigError(f"Bracket must be an increasing pair, got {self.bracket}")
        if not self.tolerance > 0:
            raise ConfigError("Root tolerance must be positive")

    @property
    def sign(self) -> float:
        return -1.0 if self.direction == DIR_LESS else 1.0


@dataclass(frozen=True)
class SensitivityRow:
    gamma: float
    max_pvalue: float
    deviate: float
    ci_bound: Optional[float]
    ci_side: Optional[str]
    estimate_min: float
    estimate_max: float
    worst_case_estimate: float
    exact_pvalue: Optional[float] = None
    ci_other_bound: Optional[float] = None


@dataclass(frozen=True)
class SensitivityReport:
    model: str
    parameter: str
    direction: str
    alpha: float
    two_sided: bool
    n_sets: int
    set_size: int
    rows: tuple[SensitivityRow, ...]
    effect_ratio: Optional[float] = None

    def is_monotone(self) -> bool:
        """P-value bounds nondecreasing and estimate intervals widening in Gamma."""
        ordered = sorted(self.rows, key=lambda row: row.gamma)
        return all(
            later.max_pvalue >= earlier.max_pvalue
            and later.estimate_min <= earlier.estimate_min + 1e-9
            and later.estimate_max >= earlier.estimate_max - 1e-9
            for earlier, later in zip(ordered, ordered[1:])
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["rows"] = [asdict(row) for row in self.rows]
        data["amplification"] = {
            str(row.gamma): [
                {"delta": p.delta, "lambda": p.lambda_} for p in amplify(row.gamma)
            ]
            for row in self.rows if row.gamma > 1
        }
        data["amplification_table"] = amplification_table([row.gamma for row in self.rows])
        return data


# Gamma model -----------------------------------------------------------------

def _gamma(gamma: Union[GammaLevel, Number]) -> Number:
    value = gamma.gamma if isinstance(gamma, GammaLevel) else gamma
    if not value >= 1:
        raise DomainError(f"Gamma must be at least 1, got {value}")
    return value


def _candidates(q: Sequence[Number], g: Number):
    """(a, mean, variance, top indices) when the a largest scores get weight Gamma."""
    J = len(q)
    order = sorted(range(J), key=lambda j: (-q[j], j))
    total = sum(q)
    total_sq = sum(x * x for x in q)
    top = top_sq = 0
    for a in range(J + 1):
        if a:
            top += q[order[a - 1]]
            top_sq += q[order[a - 1]] ** 2
        denom = a * g + (J - a)
        mean = (g * top + (total - top)) / denom
        second = (g * top_sq + (total_sq - top_sq)) / denom
        yield a, mean, second - mean * mean, order[:a]


def _best(candidates):
    best = None
    for candidate in candidates:
        _, mean, var = candidate[:3]
        if best is None or mean > best[1] or (mean == best[1] and var > best[2]):
            best = candidate
    return best


def worst_case_distribution(score: SetScore, gamma: Union[GammaLevel, Number]) -> tuple[Number, ...]:
    """
    Treatment probabilities of the members under the separable worst case.

    Args:
        score: Scores of one matched set.
        gamma: Sensitivity parameter.

    Returns:
        Probability that each member is the treated one, in member order.
    """
    g = _gamma(gamma)
    a, _, _, top = _best(_candidates(score.q, g))
    denom = a * g + (len(score.q) - a)
    chosen = set(top)
    return tuple((g if j in chosen else 1) / denom for j in range(len(score.q)))


def worst_case_moments(score: SetScore, gamma: Union[GammaLevel, Number]) -> tuple[Number, Number]:
    """
    Largest expectation of the set's statistic under Gamma, and the largest variance
    among the distributions attaining it.

    Only binary unobserved covariates are searched: the a largest scores receive
    weight Gamma and the others weight 1, for a = 0..J. Exact for Fraction inputs.

    Args:
        score: Scores of one matched set.
        gamma: Sensitivity parameter.

    Returns:
        (mu_max, nu_at_max)
    """
    _, mean, var, _ = _best(_candidates(score.q, _gamma(gamma)))
    return mean, var


def brute_force_moments(score: SetScore, gamma: Union[GammaLevel, Number]) -> tuple[Number, Number]:
    """Same as worst_case_moments by enumerating all 2^J binary unobserved covariates."""
    g = _gamma(gamma)
    q = score.q

    def moments(u: tuple[int, ...]):
        weights = [g if bit else 1 for bit in u]
        total = sum(weights)
        mean = sum(w * x for w, x in zip(weights, q)) / total
        var = sum(w * x * x for w, x in zip(weights, q)) / total - mean * mean
        return u, mean, var

    _, mean, var = _best(moments(u) for u in itertools.product((0, 1), repeat=len(q)))
    return mean, var


def worst_case_moments_batch(Q: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized worst_case_moments over the rows of an I-by-J score matrix."""
    I, J = Q.shape
    g = float(_gamma(gamma))
    ordered = -np.sort(-Q, axis=1)
    zero = np.zeros((I, 1))
    top = np.hstack([zero, np.cumsum(ordered, axis=1)])
    top_sq = np.hstack([zero, np.cumsum(ordered ** 2, axis=1)])
    a = np.arange(J + 1)
    denom = a * g + (J - a)
    mean = (g * top + (top[:, [J]] - top)) / denom
    var = (g * top_sq + (top_sq[:, [J]] - top_sq)) / denom - mean ** 2

    mu = mean.max(axis=1)
    tied = mean >= mu[:, None] - 1e-12 * np.maximum(1.0, np.abs(mu))[:, None]
    nu = np.where(tied, var, -np.inf).max(axis=1)
    return mu, np.clip(nu, 0.0, None)


def _upper_tail(observed: float, mu_sum: float, nu_sum: float) -> tuple[float, float]:
    if nu_sum <= 0:
        return (1.0, 0.0) if observed <= mu_sum else (0.0, math.inf)
    deviate = (observed - mu_sum) / math.sqrt(nu_sum)
    return float(norm.sf(deviate)), deviate


def _score_matrices(scores: Sequence[SetScore]) -> dict[int, tuple[np.ndarray, float]]:
    groups: dict[int, list[SetScore]] = defaultdict(list)
    for score in scores:
        groups[len(score.q)].append(score)
    return {
        J: (np.array([[float(x) for x in s.q] for s in group]),
            float(sum(float(s.observed) for s in group)))
        for J, group in groups.items()
    }


def max_pvalue(scores: Sequence[SetScore], gamma: Union[GammaLevel, float],
               observed_T: Optional[float] = None) -> float:
    """
    Upper bound on the one-sided p-value of the sum statistic at Gamma (normal approximation).

    Args:
        scores: Per-set scores.
        gamma: Sensitivity parameter.
        observed_T: Observed sum of treated scores; computed from the scores by default.

    Returns:
        The maximum p-value.
    """
    if not scores:
        raise EmptyDesign("No matched sets to test")
    mu_sum = nu_sum = observed = 0.0
    for Q, treated_total in _score_matrices(scores).values():
        mu, nu = worst_case_moments_batch(Q, _gamma(gamma))
        mu_sum += float(mu.sum())
        nu_sum += float(nu.sum())
        observed += treated_total
    if observed_T is not None:
        observed = observed_T
    return _upper_tail(observed, mu_sum, nu_sum)[0]


def exact_max_pvalue(scores: Sequence[SetScore], gamma: Union[GammaLevel, float],
                     observed_T: Optional[float] = None) -> float:
    """
    Exact upper tail of the sum statistic when every set follows its separable
    worst-case distribution. This is the tail of one particular distribution, an
    approximation to the global maximum that is correct in large samples.

    Args:
        scores: Per-set scores, at most EXACT_MAX_SETS of them.
        gamma: Sensitivity parameter.
        observed_T: Observed sum of treated scores; computed from the scores by default.

    Returns:
        P(T >= observed_T) under the worst-case distribution.
    """
    if not scores:
        raise EmptyDesign("No matched sets to test")
    if len(scores) > EXACT_MAX_SETS:
        raise TooLarge(f"{len(scores)} sets exceed the exact limit of {EXACT_MAX_SETS}")

    atoms: dict[int, float] = {0: 1.0}
    for score in scores:
        probs = worst_case_distribution(score, gamma)
        support: dict[int, float] = defaultdict(float)
        for value, prob in zip(score.q, probs):
            support[round(float(value) * EXACT_GRID)] += float(prob)
        convolved: dict[int, float] = defaultdict(float)
        for total, p_total in atoms.items():
            for value, p_value in support.items():
                convolved[total + value] += p_total * p_value
        if len(convolved) > EXACT_MAX_ATOMS:
            raise TooLarge(f"Convolution exceeds {EXACT_MAX_ATOMS} atoms")
        atoms = convolved

    if observed_T is None:
        threshold = sum(round(float(s.observed) * EXACT_GRID) for s in scores)
    else:
        # per-set rounding can move a sum by up to one grid step per set
        threshold = round(float(observed_T) * EXACT_GRID) - len(scores)
    return min(1.0, sum(p for total, p in atoms.items() if total >= threshold))


# Scores ----------------------------------------------------------------------

def outcome_matrix(design: MatchDesign, values: Mapping[str, float]) -> np.ndarray:
    """I-by-J matrix of per-subject values; column 0 is the treated member."""
    if not design.sets:
        raise EmptyDesign("Design has no matched sets")
    J = design.set_size
    matrix = np.empty((len(design.sets), J))
    for i, matched in enumerate(design.sets):
        for j, member in enumerate(matched.members):
            try:
                matrix[i, j] = float(values[member])
            except KeyError:
                raise MissingOutcome(f"No outcome for subject {member}") from None
            if not math.isfinite(matrix[i, j]):
                raise MissingOutcome(f"Outcome of subject {member} is not finite")
    return matrix


def _cohort_outcome(cohort: Sequence[SubjectHistory], name: str) -> dict[str, float]:
    return {
        subject.subject_id: subject.outcomes[name]
        for subject in validate_cohort(cohort).values() if name in subject.outcomes
    }


def huber_scale_matrix(Y: np.ndarray) -> float:
    return float(np.median(np.abs(Y[:, 1:] - Y[:, [0]])))


def huber_scale(design: MatchDesign, outcomes: Mapping[str, float]) -> float:
    """Median absolute treated-minus-control difference over all sets."""
    return huber_scale_matrix(outcome_matrix(design, outcomes))


def score_matrix(Y: np.ndarray, spec: StatisticSpec) -> np.ndarray:
    """Scores q_ij for an outcome matrix; each row sums to zero."""
    J = Y.shape[1]
    if spec.kind == STAT_HUBER:
        scale = spec.scale if spec.scale is not None else huber_scale_matrix(Y)
        if scale > 0:
            diffs = (Y[:, :, None] - Y[:, None, :]) / scale
            psi = np.clip(diffs, -spec.huber_cutoff, spec.huber_cutoff)
            return psi.sum(axis=2) / (J - 1)
        logger.warning("Huber scale is zero, falling back to the mean difference")
    return Y - (Y.sum(axis=1, keepdims=True) - Y) / (J - 1)


def set_scores(design: MatchDesign, adjusted_outcome: Mapping[str, float],
               spec: StatisticSpec) -> list[SetScore]:
    """
    Per-set scores of an adjusted outcome.

    Args:
        design: Matched design.
        adjusted_outcome: Subject id to (adjusted) outcome.
        spec: Statistic definition.

    Returns:
        One SetScore per matched set, treated member first.
    """
    Q = score_matrix(outcome_matrix(design, adjusted_outcome), spec)
    return [SetScore(matched.set_id, tuple(row)) for matched, row in zip(design.sets, Q.tolist())]


def tobit_transform(R: float, Z: int, tau0: float) -> float:
    """max(0, R - (1 - Z) * tau0): the treated response implied by a Tobit effect tau0."""
    return max(0.0, R - (1 - Z) * tau0)


def _tobit_matrix(R: np.ndarray, tau0: float) -> np.ndarray:
    adjusted = R.copy()
    adjusted[:, 1:] = np.maximum(0.0, R[:, 1:] - tau0)
    return adjusted


def effect_ratio(design: MatchDesign, cohort: Sequence[SubjectHistory],
                 outcome: str, dose: str) -> float:
    """Sum of treated-minus-control mean outcomes over the same sum for the dose."""
    R = outcome_matrix(design, _cohort_outcome(cohort, outcome))
    D = outcome_matrix(design, _cohort_outcome(cohort, dose))
    numerator = float((R[:, 0] - R[:, 1:].mean(axis=1)).sum())
    denominator = float((D[:, 0] - D[:, 1:].mean(axis=1)).sum())
    if denominator == 0:
        raise ZeroDoseEffect("Treatment did not change the dose in any matched set")
    return numerator / denominator


# Inversion -------------------------------------------------------------------

def find_root(f: Callable[[float], float], bracket: tuple[float, float],
              tolerance: float = 1e-6, max_expansions: int = 10) -> float:
    """
    Bisection after widening the bracket by doubling until f changes sign.

    Args:
        f: Function of one parameter.
        bracket: Initial (low, high).
        tolerance: Width at which bisection stops.
        max_expansions: Doublings allowed before giving up.

    Returns:
        A parameter value where f changes sign.
    """
    lo, hi = bracket
    f_lo, f_hi = f(lo), f(hi)
    expansions = 0
    while f_lo * f_hi > 0:
        if expansions >= max_expansions:
            raise BracketFailure(
                f"No sign change over [{lo:g}, {hi:g}] after {expansions} expansions"
            )
        center, width = (lo + hi) / 2, hi - lo
        lo, hi = center - width, center + width
        f_lo, f_hi = f(lo), f(hi)
        expansions += 1

    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    while hi - lo > tolerance:
        mid = (lo + hi) / 2
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return (lo + hi) / 2


class _Inversion:
    """Test statistic and its worst-case moments as functions of the effect parameter."""

    def __init__(self, adjusted: Callable[[float], np.ndarray], spec: StatisticSpec,
                 settings: InferenceSettings) -> None:
        self.adjusted = adjusted
        self.spec = spec
        self.settings = settings
        self.logger = setup_logger(self.__class__.__name__)

    def terms(self, theta: float, gamma: float, side: float = 1.0) -> tuple[float, float, float]:
        """(observed, sum of mu_max, sum of nu) for scores oriented by direction and side."""
        Q = side * self.settings.sign * score_matrix(self.adjusted(theta), self.spec)
        mu, nu = worst_case_moments_batch(Q, gamma)
        return float(Q[:, 0].sum()), float(mu.sum()), float(nu.sum())

    def scores(self, theta: float) -> list[SetScore]:
        Q = self.settings.sign * score_matrix(self.adjusted(theta), self.spec)
        return [SetScore(i + 1, tuple(row)) for i, row in enumerate(Q.tolist())]

    def _root(self, f: Callable[[float], float]) -> float:
        return find_root(f, self.settings.bracket, self.settings.tolerance,
                         self.settings.max_bracket_expansions)

    def _optional_root(self, f: Callable[[float], float], what: str, gamma: float) -> Optional[float]:
        try:
            return self._root(f)
        except BracketFailure as e:
            self.logger.warning(f"Gamma={gamma:g}: {what} not found ({e})")
            return None

    def row(self, gamma: float) -> SensitivityRow:
        settings = self.settings
        alpha = settings.alpha / 2 if settings.two_sided else settings.alpha
        z = float(norm.isf(alpha))

        def upper(theta: float) -> float:
            observed, mu, _ = self.terms(theta, gamma)
            return observed - mu

        def lower(theta: float) -> float:
            observed, mu, _ = self.terms(theta, gamma, side=-1.0)
            return -observed + mu

        def boundary(side: float) -> Callable[[float], float]:
            def f(theta: float) -> float:
                observed, mu, nu = self.terms(theta, gamma, side)
                return observed - mu - z * math.sqrt(nu)
            return f

        worst = self._root(upper)
        other = self._root(lower)
        ci_bound = self._optional_root(boundary(1.0), "confidence bound", gamma)
        ci_side = None if ci_bound is None else ("lower" if worst >= ci_bound else "upper")
        ci_other = (
            self._optional_root(boundary(-1.0), "second confidence bound", gamma)
            if settings.two_sided else None
        )

        observed, mu, nu = self.terms(settings.null_value, gamma)
        p_value, deviate = _upper_tail(observed, mu, nu)
        if settings.two_sided:
            observed_low, mu_low, nu_low = self.terms(settings.null_value, gamma, side=-1.0)
            p_low, _ = _upper_tail(observed_low, mu_low, nu_low)
            p_value = min(1.0, 2 * min(p_value, p_low))

        exact = None
        null_scores = self.scores(settings.null_value)
        if len(null_scores) <= EXACT_MAX_SETS:
            try:
                exact = exact_max_pvalue(null_scores, gamma)
            except TooLarge as e:
                self.logger.warning(f"Exact p-value skipped: {e}")

        self.logger.info(f"Gamma={gamma:g}: p<={p_value:.4g}, estimate {worst:.6g}")
        return SensitivityRow(
            gamma=float(gamma),
            max_pvalue=p_value,
            deviate=deviate,
            ci_bound=ci_bound,
            ci_side=ci_side,
            estimate_min=min(worst, other),
            estimate_max=max(worst, other),
            worst_case_estimate=worst,
            exact_pvalue=exact,
            ci_other_bound=ci_other,
        )


def _report(inversion: _Inversion, gammas: Sequence[Union[GammaLevel, float]], model: str,
            parameter: str, design: MatchDesign, settings: InferenceSettings,
            ratio: Optional[float] = None, threads: Optional[int] = None) -> SensitivityReport:
    levels = [float(_gamma(g)) for g in gammas]
    if not levels:
        raise ConfigError("At least one Gamma is required")
    with ThreadPoolExecutor(max_workers=threads or resolve_threads()) as pool:
        rows = tuple(pool.map(inversion.row, levels))
    report = SensitivityReport(
        model=model, parameter=parameter, direction=settings.direction,
        alpha=settings.alpha, two_sided=settings.two_sided,
        n_sets=len(design.sets), set_size=design.set_size,
        rows=rows, effect_ratio=ratio,
    )
    if not report.is_monotone():
        logger.warning("Sensitivity report is not monotone in Gamma")
    return report


def _frozen_spec(spec: StatisticSpec, raw: np.ndarray) -> StatisticSpec:
    if spec.kind != STAT_HUBER or spec.scale is not None:
        return spec
    scale = huber_scale_matrix(raw)
    if scale == 0:
        logger.warning("Huber scale is zero, using the mean difference")
        return replace(spec, kind=STAT_MEAN)
    return replace(spec, scale=scale)


def infer_tobit(design: MatchDesign, cohort: Sequence[SubjectHistory], outcome: str,
                gammas: Sequence[Union[GammaLevel, float]], spec: StatisticSpec,
                settings: InferenceSettings = InferenceSettings(),
                threads: Optional[int] = None) -> SensitivityReport:
    """
    Sensitivity analysis for a Tobit effect tau, r_T = max(0, r_C - tau).

    H0: tau = tau0 is the test of no effect on max(0, R - (1 - Z) tau0); estimates solve
    the estimating equation at the worst-case expectation and confidence bounds invert
    the test.

    Args:
        design: Matched design.
        cohort: Subjects carrying the outcome.
        outcome: Outcome name, values in [0, inf).
        gammas: Sensitivity parameters.
        spec: Statistic definition.
        settings: Level, direction and root-finding settings.
        threads: Worker threads across Gammas.

    Returns:
        One row per Gamma.
    """
    R = outcome_matrix(design, _cohort_outcome(cohort, outcome))
    if (R < 0).any():
        raise DomainError(f"Outcome '{outcome}' must be nonnegative for a Tobit effect")
    frozen = _frozen_spec(spec, R)
    inversion = _Inversion(lambda tau: _tobit_matrix(R, tau), frozen, settings)
    return _report(inversion, gammas, MODEL_TOBIT, "tau", design, settings, threads=threads)


def infer_proportional(design: MatchDesign, cohort: Sequence[SubjectHistory], outcome: str,
                       dose: str, gammas: Sequence[Union[GammaLevel, float]],
                       spec: StatisticSpec, settings: InferenceSettings = InferenceSettings(),
                       threads: Optional[int] = None) -> SensitivityReport:
    """
    Sensitivity analysis for a proportional effect, r_T - r_C = beta (d_T - d_C).

    H0: beta = beta0 is the test of no effect on R - beta0 D. At Gamma = 1 with the
    mean statistic the estimate is the sample effect ratio.

    Args:
        design: Matched design.
        cohort: Subjects carrying outcome and dose.
        outcome: Outcome name.
        dose: Dose name.
        gammas: Sensitivity parameters.
        spec: Statistic definition.
        settings: Level, direction and root-finding settings.
        threads: Worker threads across Gammas.

    Returns:
        One row per Gamma, with the sample effect ratio.
    """
    R = outcome_matrix(design, _cohort_outcome(cohort, outcome))
    D = outcome_matrix(design, _cohort_outcome(cohort, dose))
    ratio = effect_ratio(design, cohort, outcome, dose)
    frozen = _frozen_spec(spec, R)
    inversion = _Inversion(lambda beta: R - beta * D, frozen, settings)
    try:
        return _report(inversion, gammas, MODEL_RATIO, "beta", design, settings,
                       ratio=ratio, threads=threads)
    except ZeroDoseEffect:
        raise
    except BracketFailure as e:
        raise ZeroDoseEffect(f"No root for the proportional effect, dose barely affected: {e}") from e


# Amplification ---------------------------------------------------------------

def amplification_gamma(delta: float, lambda_: float) -> float:
    """Gamma = (Delta Lambda + 1) / (Delta + Lambda)."""
    return (delta * lambda_ + 1) / (delta + lambda_)


def amplify(gamma: Union[GammaLevel, float],
            deltas: Optional[Sequence[float]] = None) -> list[AmplificationPoint]:
    """
    Points (Delta, Lambda) on the amplification curve of Gamma.

    Args:
        gamma: Sensitivity parameter, greater than 1.
        deltas: Values of Delta, each greater than Gamma; a default grid including the
            Delta = Lambda point otherwise.

    Returns:
        Points sorted by Delta.
    """
    g = float(gamma.gamma if isinstance(gamma, GammaLevel) else gamma)
    if not g > 1:
        raise DomainError(f"Amplification needs Gamma > 1, got {g}")
    if deltas is None:
        symmetric = g + math.sqrt(g * g - 1)
        grid = g * np.geomspace(1.05, 50.0, 12)
        deltas = sorted(set(grid.tolist()) | {symmetric})
    points = []
    for delta in deltas:
        if not delta > g:
            raise DomainError(f"Delta must exceed Gamma={g}, got {delta}")
        points.append(AmplificationPoint(delta, (delta * g - 1) / (delta - g), parent_gamma=g))
    return sorted(points, key=lambda p: p.delta)


def amplification_table(gammas: Sequence[float]) -> list[dict[str, float]]:
    """The Delta = Lambda point of each Gamma > 1."""
    return [
        {"gamma": g, "delta_equals_lambda": g + math.sqrt(g * g - 1)}
        for g in gammas if g > 1
    ]
