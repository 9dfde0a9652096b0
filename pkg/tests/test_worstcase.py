import time

import pytest

from src.sim import ENGINE_TRIAL
from src.worstcase import (
    DESIGNS,
    WorstCaseQuery,
    binomial_standard_error,
    curve_grid,
    parse_grid,
    plot_worst_case_curves,
    r_closed_form,
    r_monte_carlo,
    r_series,
    verify_grid,
    worst_case_curve,
)


def r(design: str, v: float) -> float:
    return r_closed_form(WorstCaseQuery(design, v))


# ----------------------------------------------------------
#  Замкнутые формулы
# ----------------------------------------------------------
@pytest.mark.parametrize("design, v, expected", [
    ("d3p3", 0.25, 0.571615),
    ("d3p3", 0.30, 0.453795),
    ("hybrid123", 0.25, 0.73686),
    ("d4p4", 0.15, 0.69703),
    ("d4p4", 0.25, 0.40022),
    ("d2p2", 0.25, 0.765182),
])
def test_closed_form_values(design, v, expected):
    assert r(design, v) == pytest.approx(expected, abs=2e-5)


def test_headline_bounds():
    assert r("d3p3", 0.25) == pytest.approx(0.57, abs=0.005)
    assert r("hybrid123", 0.25) == pytest.approx(0.74, abs=0.005)
    assert 1.0 - r("d4p4", 0.15) >= 0.30


def test_ordering_at_quarter():
    assert r("d4p4", 0.25) < r("d3p3", 0.25) < r("hybrid123", 0.25) < r("d2p2", 0.25)


@pytest.mark.parametrize("design", DESIGNS)
def test_endpoints(design):
    assert r(design, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert r(design, 0.0) == 1.0
    assert r(design, 1e-6) == pytest.approx(1.0, abs=1e-3)


def test_series_agrees_with_closed_form_on_grid():
    grid = parse_grid("0.05:0.95:0.05")
    assert len(grid) == 19
    assert verify_grid(DESIGNS, grid, tol=1e-12) == []


def test_series_rejects_non_positive_tolerance():
    with pytest.raises(ValueError):
        r_series(WorstCaseQuery("d3p3", 0.2), tol=0.0)


@pytest.mark.parametrize("design, v", [("d5p5", 0.2), ("d3p3", 1.5), ("d3p3", -0.1)])
def test_query_validation(design, v):
    with pytest.raises(ValueError):
        WorstCaseQuery(design, v)


# ----------------------------------------------------------
#  Сетка и график
# ----------------------------------------------------------
@pytest.mark.parametrize("text", ["0.1:0.2", "0.5:0.1:0.1", "0.1:0.5:0", "a:b:c"])
def test_parse_grid_rejects_bad_grids(text):
    with pytest.raises(ValueError):
        parse_grid(text)


def test_parse_grid_is_inclusive():
    assert parse_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]


def test_curve_grid_columns():
    frame = curve_grid(DESIGNS, [0.25, 1.0])
    assert list(frame.columns) == ["v", "r_3p3", "r_2p2", "r_4p4", "r_hybrid123"]
    assert frame.iloc[1, 1:].tolist() == pytest.approx([0.0] * 4, abs=1e-15)


def test_svg_is_written(tmp_path):
    path = tmp_path / "curves.svg"
    plot_worst_case_curves(curve_grid(DESIGNS, parse_grid("0.05:0.95:0.05")), str(path))
    assert "<svg" in path.read_text(encoding="utf-8")


def test_worst_case_curve_shape():
    curve = worst_case_curve("d3p3", 0.3, d=3, levels=5)
    assert curve.probs == (0.0, 0.0, 0.3, 0.3, 0.3)
    with pytest.raises(ValueError):
        worst_case_curve("d3p3", 0.3, d=6, levels=5)


# ----------------------------------------------------------
#  Монте-Карло
# ----------------------------------------------------------
def test_monte_carlo_needs_safe_doses():
    with pytest.raises(ValueError):
        r_monte_carlo(WorstCaseQuery("d3p3", 0.25), d=1, reps=10)


@pytest.mark.parametrize("design", DESIGNS)
def test_monte_carlo_close_to_closed_form(design):
    query = WorstCaseQuery(design, 0.25)
    reps = 4000
    bound = r_monte_carlo(query, d=3, levels=40, reps=reps, seed=3, engine=ENGINE_TRIAL)
    exact = r_closed_form(query)
    assert abs(bound.estimate - exact) <= 4 * binomial_standard_error(exact, reps) + bound.truncated_fraction


@pytest.mark.parametrize("v", [0.15, 0.25, 0.40])
@pytest.mark.parametrize("design", DESIGNS)
def test_lockstep_monte_carlo_close_to_closed_form(design, v):
    query = WorstCaseQuery(design, v)
    reps = 100_000
    bound = r_monte_carlo(query, d=3, levels=200, reps=reps, seed=5)
    exact = r_closed_form(query)
    assert abs(bound.estimate - exact) <= 4 * binomial_standard_error(exact, reps)
    assert bound.truncated_fraction < 1e-3


@pytest.mark.slow
def test_monte_carlo_full_replication():
    reps = 1_000_000
    started = time.perf_counter()
    for design in DESIGNS:
        for v in (0.15, 0.25, 0.40):
            query = WorstCaseQuery(design, v)
            bound = r_monte_carlo(query, d=3, levels=200, reps=reps, seed=11, workers=4)
            exact = r_closed_form(query)
            assert abs(bound.estimate - exact) <= 3 * binomial_standard_error(exact, reps), (design, v)
            assert bound.truncated_fraction < 1e-3
    assert time.perf_counter() - started < 120.0
