import math
import os

import pandas as pd
import pytest

from src.cohort_io import (
    fmt, read_cohort, read_design, read_json, read_unmatched, unmatched_path, write_cohort,
    write_design, write_json, write_report, write_table, write_truth,
)
from src.errors import SchemaError
from src.inference import StatisticSpec, infer_tobit
from src.riskset_matcher import build_risk_set_match
from src.simulate import SimSpec, simulate, simulate_design
from src.utils import SCHEMA_HEADER
from tests.conftest import make_subject


def write_lines(path, lines: list[str]) -> str:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


class TestCohortFiles:
    def test_round_trip_fixture(self, tmp_path, cohort) -> None:
        """Test that the matching fixture reads back unchanged."""
        path = str(tmp_path / "cohort.csv")
        write_cohort(cohort, path)
        assert read_cohort(path) == cohort

    def test_round_trip_simulated(self, tmp_path) -> None:
        """Test a cohort with time-varying covariates and full-precision floats."""
        cohort = simulate(SimSpec(n_subjects=40, p_differential=0.5, seed=8)).cohort
        path = str(tmp_path / "sim.csv")
        write_cohort(cohort, path)
        assert read_cohort(path) == cohort

    def test_bytes_deterministic(self, tmp_path, cohort) -> None:
        """Test identical bytes for identical cohorts."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_cohort(cohort, str(first))
        write_cohort(cohort, str(second))
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text(encoding="utf-8").splitlines()[0] == SCHEMA_HEADER

    def test_missing_header(self, tmp_path) -> None:
        """Test a file without the schema line."""
        path = write_lines(tmp_path / "c.csv", [
            "record,subject_id,event_index,event_time,state",
            "subject,S1,,,",
        ])
        with pytest.raises(SchemaError):
            read_cohort(path)

    def test_missing_column(self, tmp_path) -> None:
        """Test a cohort without the state column."""
        path = write_lines(tmp_path / "c.csv", [
            SCHEMA_HEADER,
            "record,subject_id,event_index,event_time",
            "subject,S1,,",
        ])
        with pytest.raises(SchemaError):
            read_cohort(path)

    @pytest.mark.parametrize("rows", [
        ["subject,S1,,,", "subject,S1,,,"],
        ["event,S9,1,20.0,1"],
        ["subject,S1,,,", "event,S1,1,abc,1"],
        ["subject,S1,,,", "event,S1,1.5,20.0,1"],
        ["subject,S1,,,", "other,S1,,,"],
        ["subject,S1,,,", "event,S1,1,20.0,1", "event,S1,2,19.0,2"],
    ])
    def test_invalid_rows(self, tmp_path, rows: list[str]) -> None:
        """Test duplicates, orphan events, bad numbers, unknown records and time order."""
        path = write_lines(tmp_path / "c.csv", [
            SCHEMA_HEADER, "record,subject_id,event_index,event_time,state", *rows,
        ])
        with pytest.raises(SchemaError):
            read_cohort(path)

    def test_empty_cells_are_absent(self, tmp_path) -> None:
        """Test that empty fixed covariate and outcome cells are left out."""
        path = write_lines(tmp_path / "c.csv", [
            SCHEMA_HEADER,
            "record,subject_id,event_index,event_time,state,fixed.race,tv.education,outcome.work_fraction",
            "subject,S1,,,,,,0.5",
            "event,S1,1,20.0,1,,12,",
            "event,S1,2,22.0,2,,13,",
        ])
        (subject,) = read_cohort(path)
        assert subject.fixed_covariates == {}
        assert subject.outcomes == {"work_fraction": 0.5}
        assert subject.events[0].tv_covariates == {"education": 12.0}
        assert subject.events[1].tv_covariates == {"education": 13.0}

    def test_empty_time_varying_cell_rejected(self, tmp_path) -> None:
        """Test that an event without a time-varying value is a schema error."""
        path = write_lines(tmp_path / "c.csv", [
            SCHEMA_HEADER,
            "record,subject_id,event_index,event_time,state,tv.education",
            "subject,A,,,,",
            "event,A,1,20.0,1,12",
            "event,A,2,22.0,2,12",
            "subject,B,,,,",
            "event,B,1,20.0,1,12",
            "event,B,2,22.0,2,",
        ])
        with pytest.raises(SchemaError, match="education"):
            read_cohort(path)

    def test_write_rejects_missing_time_varying(self, tmp_path) -> None:
        """Test that a cohort with an event lacking a time-varying value is not written."""
        cohort = [
            make_subject("A", [(20.0, 1), (22.0, 2)], tv=[{"education": 12}, {"education": 12}]),
            make_subject("B", [(20.0, 1), (22.0, 2)], tv=[{"education": 12}, {}]),
        ]
        with pytest.raises(SchemaError):
            write_cohort(cohort, str(tmp_path / "c.csv"))


class TestDesignFiles:
    def test_round_trip_with_unmatched(self, tmp_path, cohort, eligibility, distance_spec) -> None:
        """Test sets, pair distances and the unmatched log."""
        design = build_risk_set_match(cohort, eligibility, distance_spec, threads=1)
        path = str(tmp_path / "design.csv")
        write_design(design, path)
        assert os.path.exists(unmatched_path(path))
        loaded = read_design(path)
        assert loaded == design
        assert loaded.sets[0].control_distances == pytest.approx((0.4, 1.6))
        assert [u.subject_id for u in read_unmatched(unmatched_path(path))] == ["T2"]

    def test_unmatched_path(self) -> None:
        """Test the sidecar name."""
        assert unmatched_path("out/design.csv") == os.path.join("out", "design.unmatched.csv")

    def test_design_without_pair_distances(self, tmp_path) -> None:
        """Test a simulated design whose controls carry no distances."""
        _, design, _ = simulate_design(SimSpec(set_size=3, seed=1), 4)
        path = str(tmp_path / "design.csv")
        write_design(design, path)
        assert read_design(path) == design

    @pytest.mark.parametrize("rows", [
        ["1,2,2|A,control,C1,0.5"],
        ["1,2,2|A,treated,T1,1.0", "1,2,2|A,treated,T2,1.0"],
        ["1,2,3|A,treated,T1,1.0", "1,2,3|A,control,C1,0.5"],
        ["1,2,2|A,treated,T1,1.0", "1,2,2|A,spare,C1,0.5"],
    ])
    def test_invalid_design(self, tmp_path, rows: list[str]) -> None:
        """Test sets without or with two treated members, a foreign stratum and unknown arms."""
        path = write_lines(tmp_path / "d.csv", [
            SCHEMA_HEADER, "set_id,k,stratum,arm,subject_id,distance", *rows,
        ])
        with pytest.raises(SchemaError):
            read_design(path)


class TestJsonAndTables:
    def test_non_finite_values(self, tmp_path) -> None:
        """Test infinities as strings and NaN as null."""
        path = str(tmp_path / "x.json")
        write_json({"a": math.inf, "b": [-math.inf, math.nan, 1.5]}, path)
        assert read_json(path) == {"a": "inf", "b": ["-inf", None, 1.5]}

    def test_invalid_json(self, tmp_path) -> None:
        """Test a malformed JSON file."""
        path = tmp_path / "x.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(SchemaError):
            read_json(str(path))

    def test_table_floats_full_precision(self, tmp_path) -> None:
        """Test that table floats parse back to the same double."""
        path = tmp_path / "t.csv"
        write_table(pd.DataFrame({"x": [0.1 + 0.2], "y": [None]}), str(path))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[2].split(",")[0] == fmt(0.1 + 0.2)
        assert float(lines[2].split(",")[0]) == 0.1 + 0.2

    def test_report_files(self, tmp_path) -> None:
        """Test the report JSON and table written for an inference run."""
        cohort, design, _ = simulate_design(SimSpec(tau=0.05, seed=3), 30)
        report = infer_tobit(design, cohort, "work_fraction", [1.0, 1.5], StatisticSpec(), threads=1)
        json_path, csv_path = write_report(report, str(tmp_path / "run"))
        data = read_json(json_path)
        assert [row["gamma"] for row in data["rows"]] == [1.0, 1.5]
        assert "1.5" in data["amplification"]
        assert data["amplification_table"] == [
            {"gamma": 1.5, "delta_equals_lambda": pytest.approx(1.5 + math.sqrt(1.25))}
        ]
        assert len(pd.read_csv(csv_path, comment="#")) == 2

    def test_truth_file(self, tmp_path) -> None:
        """Test the truth record next to a simulated cohort."""
        simulation = simulate(SimSpec(n_subjects=3, seed=1))
        path = write_truth(simulation.truth, str(tmp_path / "sim.csv"))
        assert path.endswith("sim.csv.truth.json")
        assert set(read_json(path)["subjects"]) == {"S000000", "S000001", "S000002"}
