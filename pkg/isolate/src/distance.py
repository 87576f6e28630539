"""Robust rank-based Mahalanobis distance between history views."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .core_model import HistoryView
from .errors import ConfigError, EmptyPool, MissingEvent, UnresolvableCovariate
from .logger import setup_logger
from .utils import UNRESOLVABLE_PENALTY

logger = setup_logger(__name__)

TEMPLATE = "{j}"


@dataclass(frozen=True)
class DistanceSpec:
    """Covariates entering the distance; `{j}` names expand to events 1..k."""
    covariate_names: tuple[str, ...]
    penalty_for_unresolvable: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if not self.covariate_names:
            raise ConfigError("Distance needs at least one covariate")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise ConfigError(f"Duplicate distance covariates: {self.covariate_names}")

    def names_for(self, k: int) -> list[str]:
        """Concrete covariate names for views at event index k."""
        names: list[str] = []
        for name in self.covariate_names:
            if TEMPLATE in name:
                names.extend(name.replace(TEMPLATE, str(j)) for j in range(1, k + 1))
            else:
                names.append(name)
        return names


@dataclass(frozen=True)
class DistanceMatrix:
    """Treated-by-control distances; forbidden pairs are flagged in a separate mask."""
    treated_ids: tuple[str, ...]
    control_ids: tuple[str, ...]
    entries: np.ndarray
    forbidden: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "treated_ids", tuple(self.treated_ids))
        object.__setattr__(self, "control_ids", tuple(self.control_ids))
        entries = np.asarray(self.entries, dtype=float).reshape(
            len(self.treated_ids), len(self.control_ids)
        )
        forbidden = (
            np.zeros(entries.shape, dtype=bool) if self.forbidden is None
            else np.asarray(self.forbidden, dtype=bool).reshape(entries.shape)
        )
        allowed = entries[~forbidden]
        if np.any(~np.isfinite(allowed)) or np.any(allowed < 0):
            raise ValueError("Allowed distances must be finite and nonnegative")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "forbidden", forbidden)
        object.__setattr__(self, "_rows", {t: i for i, t in enumerate(self.treated_ids)})
        object.__setattr__(self, "_cols", {c: j for j, c in enumerate(self.control_ids)})

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def is_forbidden(self, treated_id: str, control_id: str) -> bool:
        return bool(self.forbidden[self._rows[treated_id], self._cols[control_id]])

    def distance(self, treated_id: str, control_id: str) -> float:
        i, j = self._rows[treated_id], self._cols[control_id]
        if self.forbidden[i, j]:
            raise KeyError(f"Pair ({treated_id}, {control_id}) is forbidden")
        return float(self.entries[i, j])

    def within(self, treated_ids: Sequence[str], control_ids: Sequence[str]) -> "DistanceMatrix":
        """Sub-matrix for the given ids, in the given order."""
        rows = [self._rows[t] for t in treated_ids]
        cols = [self._cols[c] for c in control_ids]
        return DistanceMatrix(
            treated_ids=tuple(treated_ids),
            control_ids=tuple(control_ids),
            entries=self.entries[np.ix_(rows, cols)],
            forbidden=self.forbidden[np.ix_(rows, cols)],
        )

    @staticmethod
    def cross_stratum(treated_ids: Sequence[str], control_ids: Sequence[str]) -> "DistanceMatrix":
        """A block of pairs from different strata: every pair forbidden."""
        shape = (len(treated_ids), len(control_ids))
        return DistanceMatrix(
            treated_ids=tuple(treated_ids),
            control_ids=tuple(control_ids),
            entries=np.zeros(shape),
            forbidden=np.ones(shape, dtype=bool),
        )


def _covariate_matrix(
    pool: Sequence[HistoryView], names: Sequence[str], penalize: bool
) -> tuple[np.ndarray, np.ndarray]:
    values = np.full((len(pool), len(names)), np.nan)
    for row, view in enumerate(pool):
        for col, name in enumerate(names):
            try:
                values[row, col] = float(view.value(name))
            except (UnresolvableCovariate, MissingEvent, ValueError, TypeError) as e:
                if not penalize:
                    raise UnresolvableCovariate(
                        f"Covariate '{name}' unresolvable for subject {view.subject_id}: {e}"
                    ) from e
    missing = np.isnan(values)
    if missing.any():
        medians = np.nanmedian(np.where(missing.all(axis=0), 0.0, values), axis=0)
        values = np.where(missing, medians, values)
        logger.debug(f"Imputed {int(missing.sum())} unresolvable covariate values")
    return values, missing.sum(axis=1)


def rank_covariance(ranks: np.ndarray) -> np.ndarray:
    """
    Covariance of rank columns with each variance rescaled to that of untied ranks.

    Args:
        ranks: n-by-p matrix of average ranks.

    Returns:
        The adjusted p-by-p covariance.
    """
    n = ranks.shape[0]
    cov = np.atleast_2d(np.cov(ranks, rowvar=False, ddof=1))
    var_untied = np.var(np.arange(1, n + 1), ddof=1)
    diag = np.diag(cov)
    ratio = np.ones_like(diag)
    positive = diag > 0
    ratio[positive] = np.sqrt(var_untied / diag[positive])
    return cov * np.outer(ratio, ratio)


def robust_mahalanobis(
    treated: Sequence[HistoryView],
    controls: Sequence[HistoryView],
    spec: DistanceSpec,
) -> DistanceMatrix:
    """
    Rank-based Mahalanobis distances from each treated view to each control view.

    Covariates are replaced by average ranks over the combined pool, the rank
    covariance has its diagonal rescaled to the variance of untied ranks, and
    squared distances use its pseudoinverse.

    Args:
        treated: Treated views (rows).
        controls: Control views (columns).
        spec: Covariates to use.

    Returns:
        The treated-by-control distance matrix.
    """
    pool = list(treated) + list(controls)
    if not pool:
        raise EmptyPool("Cannot compute distances over an empty pool")

    names = spec.names_for(min(view.k for view in pool))
    values, n_missing = _covariate_matrix(pool, names, spec.penalty_for_unresolvable)
    n_treated = len(treated)
    treated_ids = [view.subject_id for view in treated]
    control_ids = [view.subject_id for view in controls]

    if n_treated == 0 or not controls:
        return DistanceMatrix(treated_ids, control_ids, np.zeros((n_treated, len(controls))))

    ranks = stats.rankdata(values, axis=0)
    precision = np.linalg.pinv(rank_covariance(ranks), hermitian=True)

    diffs = ranks[:n_treated, None, :] - ranks[None, n_treated:, :]
    entries = np.einsum("ijk,kl,ijl->ij", diffs, precision, diffs)
    entries = np.clip(entries, 0.0, None)

    if spec.penalty_for_unresolvable:
        entries = entries + UNRESOLVABLE_PENALTY * (
            n_missing[:n_treated, None] + n_missing[None, n_treated:]
        )

    return DistanceMatrix(treated_ids, control_ids, entries)
