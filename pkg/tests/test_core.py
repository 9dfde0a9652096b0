import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import (
    Action,
    CohortRecord,
    DoseGroupRecord,
    DoseToxicityCurve,
    FloorPolicy,
    TrialState,
    TrialStateError,
    TrialStatus,
    advance,
    apply_action,
    check_invariants,
    new_trial,
    record_cohort,
    replay_trial,
    run_trial,
)
from src.rule_designs import HYBRID, RuleDesign, RuleDesignConfig
from src.tpi import TpiConfig, TpiDesign


def std33(num_doses: int = 3) -> RuleDesign:
    return RuleDesign(RuleDesignConfig(cohort_size=3, num_doses=num_doses))


# ----------------------------------------------------------
#  Доменные типы
# ----------------------------------------------------------
def test_curve_coerces_to_tuple():
    curve = DoseToxicityCurve([0.1, 0.2])
    assert curve.probs == (0.1, 0.2)
    assert curve.num_doses == 2
    assert curve.prob(2) == 0.2


@pytest.mark.parametrize("probs", [(), (0.1, 1.5), (-0.01,)])
def test_curve_rejects_bad_probabilities(probs):
    with pytest.raises(ValueError):
        DoseToxicityCurve(probs)


def test_curve_monotonicity():
    assert DoseToxicityCurve((0.1, 0.1, 0.3)).is_monotone()
    with pytest.raises(ValueError):
        DoseToxicityCurve((0.3, 0.1)).require_monotone()


def test_group_record_rejects_more_dlts_than_patients():
    with pytest.raises(TrialStateError):
        DoseGroupRecord(patients=2, dlts=3)


def test_new_trial_needs_a_dose():
    with pytest.raises(TrialStateError):
        new_trial(0)


def test_record_cohort_checks_dose_and_counts():
    state = new_trial(3)
    with pytest.raises(TrialStateError):
        record_cohort(state, 2, 3, 0)
    with pytest.raises(TrialStateError):
        record_cohort(state, 1, 3, 4)
    state = record_cohort(state, 1, 3, 1)
    assert state.group(1) == DoseGroupRecord(3, 1)
    assert state.cohort_log == (CohortRecord(1, 3, 1),)


# ----------------------------------------------------------
#  Переходы автомата
# ----------------------------------------------------------
def test_escalate_at_top_stops_with_top_dose():
    state = apply_action(new_trial(1), Action.ESCALATE)
    assert state.status is TrialStatus.STOPPED_WITH_MTD
    assert state.mtd == 1
    assert state.ceiling_reached


def test_escalate_into_excluded_dose_is_rejected():
    state = TrialState(groups=(DoseGroupRecord(),) * 3, excluded=frozenset({2, 3}))
    with pytest.raises(TrialStateError):
        apply_action(state, Action.ESCALATE)


def test_de_escalate_below_floor():
    state = new_trial(2)
    closed = apply_action(state, Action.DE_ESCALATE, floor_policy=FloorPolicy.CLOSE)
    assert closed.status is TrialStatus.STOPPED_NO_MTD
    assert apply_action(state, Action.DE_ESCALATE, floor_policy=FloorPolicy.STAY) is state


def test_unacceptable_excludes_dose_and_above():
    state = TrialState(groups=(DoseGroupRecord(),) * 3, current_dose=2)
    state = apply_action(state, Action.DE_ESCALATE_UNACCEPTABLE)
    assert state.excluded == frozenset({2, 3})
    assert state.current_dose == 1
    assert state.is_active


def test_unacceptable_at_first_dose_closes_trial():
    state = apply_action(new_trial(3), Action.DE_ESCALATE_UNACCEPTABLE)
    assert state.status is TrialStatus.STOPPED_NO_MTD
    assert state.excluded == frozenset({1, 2, 3})
    assert state.mtd is None


def test_stop_with_and_without_mtd():
    assert apply_action(new_trial(3), Action.STOP, mtd=2).status is TrialStatus.STOPPED_WITH_MTD
    assert apply_action(new_trial(3), Action.STOP).status is TrialStatus.STOPPED_NO_MTD


def test_terminal_state_rejects_actions():
    state = apply_action(new_trial(1), Action.STOP)
    with pytest.raises(TrialStateError):
        apply_action(state, Action.STAY)


# ----------------------------------------------------------
#  Прогон и повтор
# ----------------------------------------------------------
def test_run_trial_without_toxicity_reaches_ceiling():
    outcome = run_trial(std33(3), (0.0, 0.0, 0.0), rng=1)
    assert outcome.mtd == 3
    assert outcome.mtd_at_boundary
    assert outcome.total_patients == 12
    assert [g.patients for g in outcome.groups] == [3, 3, 6]


def test_run_trial_all_toxic_closes_at_first_dose():
    outcome = run_trial(std33(3), (1.0, 1.0, 1.0), rng=1)
    assert outcome.mtd is None
    assert outcome.status is TrialStatus.STOPPED_NO_MTD
    assert outcome.total_patients == 3


def test_run_trial_is_deterministic_per_seed():
    curve = (0.1, 0.25, 0.4, 0.6)
    assert run_trial(std33(4), curve, rng=42) == run_trial(std33(4), curve, rng=42)


def test_run_trial_checks_curve_length():
    with pytest.raises(ValueError):
        run_trial(std33(3), (0.1, 0.2), rng=0)


def test_replay_reproduces_outcome():
    design = std33(4)
    outcome = run_trial(design, (0.1, 0.25, 0.4, 0.6), rng=5)
    assert replay_trial(design, outcome.cohort_log) == outcome


def test_replay_rejects_foreign_log():
    with pytest.raises(TrialStateError):
        replay_trial(std33(3), [CohortRecord(2, 3, 0)])
    with pytest.raises(TrialStateError):
        replay_trial(std33(3), [CohortRecord(1, 3, 0)])


DESIGN_FACTORIES = [
    lambda d: RuleDesign(RuleDesignConfig(cohort_size=2, num_doses=d)),
    lambda d: RuleDesign(RuleDesignConfig(cohort_size=3, num_doses=d)),
    lambda d: RuleDesign(RuleDesignConfig(cohort_size=4, num_doses=d)),
    lambda d: RuleDesign(RuleDesignConfig(cohort_size=HYBRID, num_doses=d)),
    lambda d: TpiDesign(TpiConfig(), d),
]


@settings(max_examples=150, deadline=None)
@given(
    probs=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=5),
    factory=st.sampled_from(DESIGN_FACTORIES),
    seed=st.integers(min_value=0, max_value=2 ** 32),
)
def test_state_invariants_hold_along_every_trial(probs, factory, seed):
    design = factory(len(probs))
    curve = DoseToxicityCurve(probs)
    rng = np.random.default_rng(seed)
    state = design.initial_state()
    while state.is_active:
        size = design.cohort_size(state)
        dlts = int(rng.binomial(size, curve.prob(state.current_dose)))
        state = advance(design, state, dlts, size)
        check_invariants(state)

    if state.mtd is not None:
        assert state.mtd not in state.excluded
        assert state.group(state.mtd).patients > 0
    if isinstance(design, TpiDesign):
        assert state.total_patients <= design.config.max_patients
    else:
        assert all(g.patients <= 8 for g in state.groups)
