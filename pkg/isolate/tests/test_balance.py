import math
from dataclasses import replace

import pytest

from src.balance import (
    balance_table, describe_set, five_number_summary, outcome_boxplot_data, qq_data,
    residual_boxplot_data, standardized_difference,
)
from src.core_model import MatchedSet, StratumKey
from src.errors import BalanceViolation, EmptyDesign, SchemaError, UnknownVariable
from src.riskset_matcher import MatchDesign, build_risk_set_match
from src.utils import ARM_CONTROL, ARM_TREATED, POOLED_K


@pytest.fixture
def design(cohort, eligibility, distance_spec) -> MatchDesign:
    """T1 with (C1, C2) at k=2, X1 with (C4, C5) at k=3."""
    return build_risk_set_match(cohort, eligibility, distance_spec, threads=1)


class TestStandardizedDifference:
    def test_hand_value(self) -> None:
        """Test (mean_T - mean_C) / sqrt((s2_T + s2_C) / 2)."""
        assert standardized_difference([1.0, 3.0], [0.0, 2.0]) == pytest.approx(1 / math.sqrt(2))

    def test_zero_scale(self) -> None:
        """Test constant groups: zero when equal, infinite otherwise."""
        assert standardized_difference([1.0], [1.0, 1.0]) == 0.0
        assert standardized_difference([2.0], [1.0, 1.0]) == math.inf


class TestBalanceTable:
    def test_numeric_rows_per_k_and_pooled(self, design, cohort) -> None:
        """Test means of the first event time."""
        table = balance_table(design, cohort, ["event_time_1"], threads=1)
        k2 = table.row("event_time_1", "mean", 2)
        assert k2["treated_mean"] == 20.0
        assert k2["control_mean"] == pytest.approx(20.75)
        assert k2["std_diff"] == pytest.approx(-3.0)
        pooled = table.row("event_time_1", "mean", POOLED_K)
        assert pooled["treated_mean"] == pytest.approx(23.0)
        assert pooled["control_mean"] == pytest.approx(23.55)
        assert pooled["control_count"] == 4

    def test_variable_missing_at_smaller_k(self, design, cohort) -> None:
        """Test that the third event time only appears for the k=3 set."""
        table = balance_table(design, cohort, ["event_time_3"], threads=1)
        assert set(table.frame["k"].astype(str)) == {"3", POOLED_K}

    def test_exact_variable_balanced(self, design, cohort) -> None:
        """Test that region is perfectly balanced with a zero standardized difference."""
        table = balance_table(design, cohort, ["region"], threads=1)
        row = table.row("region", "A", 2)
        assert row["treated_count"] == 1 and row["control_count"] == 2
        assert row["treated_percent"] == row["control_percent"] == 100.0
        assert row["std_diff"] == 0.0

    def test_exact_violation(self, cohort, eligibility, distance_spec) -> None:
        """Test a design mixing regions on an exact variable."""
        mixed = MatchedSet(1, 2, StratumKey(2, ("A",)), "T1", ("C7", "C1"), 1.0)
        design = MatchDesign((mixed,), config_echo=(eligibility, distance_spec))
        with pytest.raises(BalanceViolation):
            balance_table(design, cohort, ["region"], threads=1)

    def test_unknown_variable(self, design, cohort) -> None:
        """Test a variable no matched subject carries."""
        with pytest.raises(UnknownVariable):
            balance_table(design, cohort, ["income"], threads=1)

    def test_empty_design(self, cohort) -> None:
        """Test the error for a design without sets."""
        with pytest.raises(EmptyDesign):
            balance_table(MatchDesign(()), cohort, ["region"], threads=1)

    def test_member_missing_from_cohort(self, design, cohort) -> None:
        """Test a design that names a subject absent from the cohort."""
        partial = [s for s in cohort if s.subject_id != "C5"]
        with pytest.raises(SchemaError):
            balance_table(design, partial, ["region"], threads=1)

    def test_variables_in_order(self, design, cohort) -> None:
        """Test the listed variables."""
        table = balance_table(design, cohort, ["region", "event_time_1"], threads=2)
        assert table.variables() == ["region", "event_time_1"]


class TestOutcomeSummaries:
    def test_qq_pairs(self, design, cohort) -> None:
        """Test treated order statistics against control quantiles."""
        pairs = qq_data(design, cohort, "work_fraction")
        assert [x for pair in pairs for x in pair] == pytest.approx([0.10, 0.25, 0.30, 0.50])

    def test_qq_identical_arms_on_diagonal(self, cohort) -> None:
        """Test that equal outcome distributions lie on the diagonal."""
        sets = (MatchedSet(1, 2, StratumKey(2), "C1", ("T1",)),
                MatchedSet(2, 2, StratumKey(2), "C2", ("C3",)))
        outcomes = {"T1": 0.50, "C3": 0.40}
        same = [
            replace(s, outcomes={"work_fraction": outcomes[s.subject_id]})
            if s.subject_id in outcomes else s
            for s in cohort
        ]
        for treated, control in qq_data(MatchDesign(sets), same, "work_fraction"):
            assert treated == pytest.approx(control)

    @pytest.mark.parametrize("values, expected", [
        ([1, 2, 3, 4, 5], (1, 2, 3, 4, 5)),
        ([8, 1, 7, 2, 6, 3, 5, 4], (1, 2.5, 4.5, 6.5, 8)),
        ([4.0], (4, 4, 4, 4, 4)),
    ])
    def test_five_number_summary(self, values: list, expected: tuple) -> None:
        """Test Tukey hinges."""
        summary = five_number_summary(values)
        assert (summary["min"], summary["q1"], summary["median"],
                summary["q3"], summary["max"]) == expected

    def test_outcome_boxplots(self, design, cohort) -> None:
        """Test one box per (k, arm)."""
        boxes = outcome_boxplot_data(design, cohort, "work_fraction")
        assert [(b["k"], b["arm"], b["n"]) for b in boxes] == [
            (2, ARM_CONTROL, 2), (2, ARM_TREATED, 1), (3, ARM_CONTROL, 2), (3, ARM_TREATED, 1),
        ]
        assert boxes[0]["median"] == pytest.approx(0.45)

    def test_residual_boxplots(self, design, cohort) -> None:
        """Test controls shifted by tau0 and floored at zero."""
        boxes = residual_boxplot_data(design, cohort, "work_fraction", 0.3)
        controls_k2 = boxes[0]
        assert controls_k2["min"] == pytest.approx(0.1)
        assert controls_k2["max"] == pytest.approx(0.2)
        treated_k2 = boxes[1]
        assert treated_k2["median"] == pytest.approx(0.30)
        controls_k3 = boxes[2]
        assert controls_k3["min"] == 0.0


class TestDescribeSet:
    def test_members_and_values(self, design, cohort) -> None:
        """Test covariates and outcomes of one set, treated first."""
        frame = describe_set(design, cohort, 1, ["event_time_2", "work_fraction"])
        assert frame["subject_id"].tolist() == ["T1", "C1", "C2"]
        assert frame["arm"].tolist() == [ARM_TREATED, ARM_CONTROL, ARM_CONTROL]
        assert frame["event_time_2"].tolist() == [22.0, 22.5, 23.0]
        assert frame["work_fraction"].tolist() == [0.30, 0.50, 0.40]

    def test_unknown_set(self, design, cohort) -> None:
        """Test a set id not in the design."""
        with pytest.raises(KeyError):
            describe_set(design, cohort, 99, ["region"])

    def test_unknown_variable(self, design, cohort) -> None:
        """Test a name that is neither a covariate nor an outcome."""
        with pytest.raises(UnknownVariable):
            describe_set(design, cohort, 1, ["income"])
