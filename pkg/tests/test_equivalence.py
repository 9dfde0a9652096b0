import pytest

from src.equivalence import (
    check_identical_assignment,
    check_isotonic_equivalence,
    check_monitoring_table,
    run_equivalence,
)
from src.tpi import DecisionMetric


def test_table_matches_under_length_normalized_metric():
    result = check_monitoring_table()
    assert result.passed, result.details
    assert any("raw_mass" in line and "(3,1)" in line and "(6,1)" in line for line in result.details)


def test_table_fails_under_raw_mass_and_names_cells():
    result = check_monitoring_table(DecisionMetric.RAW_MASS)
    assert not result.passed
    assert "(3,1)" in result.first_failure
    assert any("(6,1)" in line for line in result.details)


def test_boundary_flips_are_reported():
    result = check_monitoring_table()
    assert any("xi=0.69" in line and "(3,1)->DU" in line for line in result.details)


@pytest.mark.parametrize("max_doses", [1, 2, 4])
def test_identical_assignment(max_doses):
    result = check_identical_assignment(max_doses=max_doses)
    assert result.passed, result.first_failure


def test_isotonic_equivalence():
    result = check_isotonic_equivalence(max_doses=4)
    assert result.passed, result.first_failure
    assert len(result.details) == 4


def test_run_equivalence_default_passes():
    results = run_equivalence()
    assert [r.name for r in results] == ["monitoring_table", "identical_assignment", "isotonic_equivalence"]
    assert all(r.passed for r in results)


def test_run_equivalence_skips_assignment_under_raw_mass():
    table, assignment, isotonic = run_equivalence(DecisionMetric.RAW_MASS)
    assert not table.passed
    assert not assignment.passed
    assert "пропущено" in assignment.first_failure
    assert isotonic.passed


def test_isotonic_only():
    results = run_equivalence(isotonic_only=True, max_doses=3)
    assert [r.name for r in results] == ["isotonic_equivalence"]
