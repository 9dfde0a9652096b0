import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import DoseGroupRecord, TrialState
from src.isotonic import (
    IsotonicFit,
    brute_force_isotonic,
    empirical_rates,
    mtd_closest,
    mtd_largest_below,
    pava,
)


def fit_of(*fitted) -> IsotonicFit:
    return IsotonicFit(tuple(fitted), (1.0,) * len(fitted), tuple(fitted))


# ----------------------------------------------------------
#  PAVA
# ----------------------------------------------------------
def test_monotone_input_is_unchanged():
    fit = pava([0.0, 1 / 6, 2 / 3], [3, 6, 3])
    assert fit.fitted == pytest.approx((0.0, 1 / 6, 2 / 3), abs=1e-15)


def test_violators_are_pooled_by_weight():
    fit = pava([2 / 6, 0.0], [6, 3])
    assert fit.fitted == pytest.approx((2 / 9, 2 / 9), abs=1e-15)


@pytest.mark.parametrize("values, weights", [
    ([], []),
    ([0.1, 0.2], [1.0]),
    ([0.1, 0.2], [1.0, 0.0]),
    ([0.1, float("nan")], [1.0, 1.0]),
])
def test_invalid_input(values, weights):
    with pytest.raises(ValueError):
        pava(values, weights)


def test_brute_force_length_limit():
    with pytest.raises(ValueError):
        brute_force_isotonic([0.5] * 13, [1.0] * 13)


def test_pava_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        size = int(rng.integers(1, 8))
        values = rng.uniform(0.0, 1.0, size)
        weights = rng.integers(1, 7, size).astype(float)
        fit = pava(values, weights)
        reference = brute_force_isotonic(values, weights)
        assert np.allclose(fit.fitted, reference.fitted, rtol=0.0, atol=1e-12)
        assert fit.is_nondecreasing()


values_and_weights = st.integers(min_value=1, max_value=7).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=n, max_size=n),
        st.lists(st.integers(min_value=1, max_value=6), min_size=n, max_size=n),
    )
)


@settings(max_examples=300, deadline=None)
@given(values_and_weights)
def test_fit_properties(data):
    values, weights = data
    fit = pava(values, weights)
    assert len(fit) == len(values)
    assert fit.is_nondecreasing()
    assert np.dot(weights, fit.fitted) == pytest.approx(np.dot(weights, values), abs=1e-9)
    assert min(values) - 1e-12 <= min(fit.fitted) and max(fit.fitted) <= max(values) + 1e-12
    assert fit.sse() <= brute_force_isotonic(values, weights).sse() + 1e-12
    again = pava(fit.fitted, weights)
    assert np.allclose(again.fitted, fit.fitted, rtol=0.0, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(values_and_weights,
       st.floats(min_value=0.1, max_value=10.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_fit_and_mtd_scale_together(data, scale, p_target):
    values, weights = data
    fit = pava(values, weights)
    scaled = pava([scale * v for v in values], weights)
    assert np.allclose(scaled.fitted, [scale * f for f in fit.fitted], rtol=0.0, atol=1e-9)

    if all(abs(f - p_target) > 1e-9 for f in fit.fitted):
        assert mtd_largest_below(scaled, scale * p_target) == mtd_largest_below(fit, p_target)


# ----------------------------------------------------------
#  Правила выбора МПД
# ----------------------------------------------------------
def test_largest_below_on_boundary_structure():
    fit = pava([0.0, 1 / 6, 2 / 3], [3, 6, 3])
    assert mtd_largest_below(fit, 0.2) == 2
    assert mtd_largest_below(fit, 1 / 6) == 2
    assert mtd_largest_below(fit, 0.1) == 1
    assert mtd_largest_below(fit_of(0.4, 0.5), 0.2) is None


def test_largest_below_uses_dose_map():
    assert mtd_largest_below(fit_of(0.0, 0.5), 0.2, dose_map=[2, 4]) == 2
    with pytest.raises(ValueError):
        mtd_largest_below(fit_of(0.0, 0.5), 0.2, dose_map=[1])


def test_closest_single_dose():
    assert mtd_closest(fit_of(1 / 6), 0.17) == 1


def test_closest_equidistant_pair_takes_lower_dose():
    assert mtd_closest(fit_of(0.1, 0.24), 0.17) == 1


@pytest.mark.parametrize("fitted, expected", [
    ((0.05, 0.05), 2),
    ((0.3, 0.3), 1),
    ((0.0, 0.15, 0.4), 2),
    ((0.2, 0.2, 0.2), 1),
])
def test_closest_ties(fitted, expected):
    assert mtd_closest(fit_of(*fitted), 0.2) == expected


def test_empirical_rates_skip_unvisited_doses():
    state = TrialState(groups=(DoseGroupRecord(3, 0), DoseGroupRecord(0, 0), DoseGroupRecord(6, 2)))
    rates = empirical_rates(state)
    assert rates.doses == [1, 3]
    assert rates.values == [0.0, 2 / 6]
    assert rates.weights == [3.0, 6.0]
