import pytest

from src.core import DoseToxicityCurve, run_trial
from src.model import DoseFindingModel
from src.rule_designs import HYBRID, RuleDesign, RuleDesignConfig
from src.tpi import TpiConfig, TpiDesign

CURVE = DoseToxicityCurve((0.05, 0.15, 0.30, 0.50))


@pytest.mark.parametrize("design", [
    RuleDesign(RuleDesignConfig(cohort_size=3, num_doses=4)),
    RuleDesign(RuleDesignConfig(cohort_size=HYBRID, num_doses=4)),
    TpiDesign(TpiConfig(), 4),
])
def test_model_matches_run_trial(design):
    model = DoseFindingModel(design, CURVE, seed=13)
    model.run_model()
    assert not model.running
    assert model.outcome() == run_trial(design, CURVE, rng=13)


def test_trace_has_one_row_per_cohort():
    design = RuleDesign(RuleDesignConfig(num_doses=4))
    model = DoseFindingModel(design, CURVE, seed=2)
    model.run_model()
    trace = model.trace()
    outcome = model.outcome()
    assert len(trace) == len(outcome.cohort_log)
    assert list(trace["Dose"]) == [r.dose for r in outcome.cohort_log]
    assert list(trace["DLTs"]) == [r.dlts for r in outcome.cohort_log]
    assert trace["TotalPatients"].iloc[-1] == outcome.total_patients
    assert trace["Status"].iloc[-1] == outcome.status.value


def test_same_seed_same_trace():
    design = TpiDesign(TpiConfig(), 4)
    first = DoseFindingModel(design, CURVE, seed=5)
    second = DoseFindingModel(design, CURVE, seed=5)
    first.run_model()
    second.run_model()
    assert first.trace().equals(second.trace())


def test_step_after_stop_is_noop():
    design = RuleDesign(RuleDesignConfig(num_doses=1))
    model = DoseFindingModel(design, (1.0,), seed=0)
    model.step()
    assert not model.running
    model.step()
    assert len(model.trace()) == 1


def test_curve_length_must_match():
    with pytest.raises(ValueError):
        DoseFindingModel(RuleDesign(RuleDesignConfig(num_doses=3)), (0.1, 0.2), seed=0)
