import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core_model import history_view
from src.distance import DistanceMatrix, DistanceSpec, rank_covariance, robust_mahalanobis
from src.errors import ConfigError, EmptyPool, UnresolvableCovariate
from src.utils import UNRESOLVABLE_PENALTY
from tests.conftest import make_subject


def views(rows: list[tuple[str, list[float]]], k: int = 2, tv: str = "x"):
    """Views at k of subjects whose covariate `tv` at event k is given."""
    out = []
    for subject_id, values in rows:
        events = [(20.0 + j, 1) for j in range(k)]
        tvs = [{tv: v} for v in values]
        out.append(history_view(make_subject(subject_id, events, tv=tvs), k))
    return out


class TestDistanceSpec:
    def test_names_for_expands_templates(self) -> None:
        """Test {j} expansion for events 1..k."""
        spec = DistanceSpec(("event_time_{j}", "race", "education_{j}"))
        assert spec.names_for(2) == [
            "event_time_1", "event_time_2", "race", "education_1", "education_2"
        ]

    @pytest.mark.parametrize("names", [(), ("a", "a")])
    def test_invalid_specs(self, names: tuple) -> None:
        """Test empty and duplicated covariate lists."""
        with pytest.raises(ConfigError):
            DistanceSpec(names)


class TestRankCovariance:
    def test_untied_ranks_unchanged(self) -> None:
        """Test that untied rank columns keep their covariance."""
        ranks = np.array([[1, 2], [2, 1], [3, 3], [4, 4]], dtype=float)
        assert np.allclose(rank_covariance(ranks), np.cov(ranks, rowvar=False))

    def test_tied_column_rescaled(self) -> None:
        """Test that a tied column gets the variance of untied ranks."""
        ranks = np.array([[1.5], [1.5], [3.0], [4.0]])
        assert rank_covariance(ranks)[0, 0] == pytest.approx(np.var([1, 2, 3, 4], ddof=1))

    def test_constant_column_kept(self) -> None:
        """Test that a constant column keeps ratio one."""
        ranks = np.array([[2.0, 1.0], [2.0, 2.0], [2.0, 3.0]])
        cov = rank_covariance(ranks)
        assert cov[0, 0] == 0.0
        assert cov[1, 1] == pytest.approx(1.0)


class TestRobustMahalanobis:
    def test_identical_covariates_zero_distance(self) -> None:
        """Test that equal values give distance zero."""
        treated = views([("T", [5.0, 5.0])])
        controls = views([("C1", [5.0, 5.0]), ("C2", [9.0, 9.0])])
        D = robust_mahalanobis(treated, controls, DistanceSpec(("x_{j}",)))
        assert D.distance("T", "C1") == pytest.approx(0.0, abs=1e-12)
        assert D.distance("T", "C2") > 0

    def test_single_covariate_hand_value(self) -> None:
        """Test a one-covariate pool: d = (rank difference)^2 / var(ranks)."""
        treated = views([("T", [1.0])], k=1)
        controls = views([("C1", [2.0]), ("C2", [3.0])], k=1)
        D = robust_mahalanobis(treated, controls, DistanceSpec(("x",)))
        assert D.distance("T", "C1") == pytest.approx(1.0)
        assert D.distance("T", "C2") == pytest.approx(4.0)

    def test_fixture_stratum(self, cohort, distance_spec) -> None:
        """Test the k=2 stratum of the fixture: identical rank columns, d = 0.4 delta^2."""
        index = {s.subject_id: s for s in cohort}
        treated = [history_view(index["T1"], 2)]
        controls = [history_view(index[c], 2) for c in ("C1", "C2", "C3", "X1")]
        D = robust_mahalanobis(treated, controls, distance_spec)
        expected = {"C1": 0.4, "C2": 1.6, "X1": 3.6, "C3": 6.4}
        for control, value in expected.items():
            assert D.distance("T1", control) == pytest.approx(value)

    def test_invariant_to_monotone_transform(self) -> None:
        """Test that ranks make the distance invariant to monotone recoding."""
        rows = [("T", [1.0, 3.0]), ("C1", [2.0, 1.0]), ("C2", [4.0, 2.0]), ("C3", [3.0, 5.0])]
        logged = [(s, [float(np.exp(v)) for v in vals]) for s, vals in rows]
        spec = DistanceSpec(("x_{j}",))
        first = robust_mahalanobis(views(rows[:1]), views(rows[1:]), spec)
        second = robust_mahalanobis(views(logged[:1]), views(logged[1:]), spec)
        assert np.allclose(first.entries, second.entries)

    def test_outlier_counts_as_next_rank(self) -> None:
        """Test that an extreme control is as far as the next value up, not further."""
        treated = views([("T", [1.0])], k=1)
        spec = DistanceSpec(("x",))
        extreme = robust_mahalanobis(treated, views([("C1", [2.0]), ("C2", [3.0]), ("C3", [100.0])], k=1), spec)
        modest = robust_mahalanobis(treated, views([("C1", [2.0]), ("C2", [3.0]), ("C3", [4.0])], k=1), spec)
        # ranks 1..4 have variance 5/3; rank gap 3
        assert extreme.distance("T", "C3") == pytest.approx(5.4)
        assert modest.distance("T", "C3") == pytest.approx(5.4)
        assert np.allclose(extreme.entries, modest.entries)

    def test_duplicated_covariate_ignored(self) -> None:
        """Test that a covariate repeated under a second name leaves distances unchanged."""
        rows = [("T", 1.0), ("C1", 4.0), ("C2", 2.0), ("C3", 7.0), ("C4", 2.0)]
        pool = [
            history_view(make_subject(s, [(20.0, 1)], tv=[{"x": v, "y": v}]), 1) for s, v in rows
        ]
        single = robust_mahalanobis(pool[:1], pool[1:], DistanceSpec(("x",)))
        doubled = robust_mahalanobis(pool[:1], pool[1:], DistanceSpec(("x", "y")))
        assert np.allclose(single.entries, doubled.entries)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=3, max_size=10))
    def test_symmetric_in_treated_and_control(self, values: list) -> None:
        """Test that swapping the treated subject with a control keeps their distance."""
        rows = [(f"S{i}", [float(a), float(b)]) for i, (a, b) in enumerate(values)]
        spec = DistanceSpec(("x_{j}",))
        forward = robust_mahalanobis(views(rows[:1]), views(rows[1:]), spec)
        backward = robust_mahalanobis(views(rows[1:2]), views(rows[:1] + rows[2:]), spec)
        assert forward.distance("S0", "S1") == pytest.approx(
            backward.distance("S1", "S0"), rel=1e-9, abs=1e-9
        )

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_invariant_to_pool_order(self, data) -> None:
        """Test that reordering the controls leaves every distance unchanged."""
        values = data.draw(st.lists(
            st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=3, max_size=10
        ))
        rows = [(f"S{i}", [float(a), float(b)]) for i, (a, b) in enumerate(values)]
        shuffled = data.draw(st.permutations(rows[1:]))
        spec = DistanceSpec(("x_{j}",))
        first = robust_mahalanobis(views(rows[:1]), views(rows[1:]), spec)
        second = robust_mahalanobis(views(rows[:1]), views(shuffled), spec)
        for subject_id, _ in rows[1:]:
            assert first.distance("S0", subject_id) == pytest.approx(
                second.distance("S0", subject_id), rel=1e-9, abs=1e-9
            )

    def test_empty_pool(self) -> None:
        """Test that an empty pool is rejected."""
        with pytest.raises(EmptyPool):
            robust_mahalanobis([], [], DistanceSpec(("x",)))

    def test_unresolvable_raises(self) -> None:
        """Test an unknown covariate without the penalty."""
        with pytest.raises(UnresolvableCovariate):
            robust_mahalanobis(views([("T", [1.0])], k=1), views([("C", [2.0])], k=1),
                               DistanceSpec(("y",)))

    def test_unresolvable_penalized(self) -> None:
        """Test the penalty added per missing covariate."""
        treated = views([("T", [1.0])], k=1)
        controls = views([("C1", [1.0])], k=1) + views([("C2", [1.0])], k=1, tv="other")
        spec = DistanceSpec(("x",), penalty_for_unresolvable=True)
        D = robust_mahalanobis(treated, controls, spec)
        assert D.distance("T", "C2") - D.distance("T", "C1") == pytest.approx(UNRESOLVABLE_PENALTY)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=3, max_size=10))
    def test_nonnegative_and_finite(self, values: list) -> None:
        """Test that every distance is finite and nonnegative, ties included."""
        rows = [(f"S{i}", [float(a), float(b)]) for i, (a, b) in enumerate(values)]
        D = robust_mahalanobis(views(rows[:1]), views(rows[1:]), DistanceSpec(("x_{j}",)))
        assert np.all(np.isfinite(D.entries))
        assert np.all(D.entries >= 0)


class TestDistanceMatrix:
    def test_forbidden_pairs(self) -> None:
        """Test that forbidden pairs cannot be read."""
        D = DistanceMatrix(("T",), ("C1", "C2"), np.array([[1.0, 2.0]]),
                           forbidden=np.array([[False, True]]))
        assert D.is_forbidden("T", "C2")
        with pytest.raises(KeyError):
            D.distance("T", "C2")

    def test_cross_stratum_all_forbidden(self) -> None:
        """Test the block between strata."""
        D = DistanceMatrix.cross_stratum(("T1", "T2"), ("C1",))
        assert D.forbidden.all()

    def test_rejects_negative(self) -> None:
        """Test that allowed entries must be nonnegative."""
        with pytest.raises(ValueError):
            DistanceMatrix(("T",), ("C",), np.array([[-1.0]]))

    def test_within(self) -> None:
        """Test slicing by ids."""
        D = DistanceMatrix(("T1", "T2"), ("C1", "C2"), np.array([[1.0, 2.0], [3.0, 4.0]]))
        sub = D.within(["T2"], ["C2", "C1"])
        assert sub.entries.tolist() == [[4.0, 3.0]]
