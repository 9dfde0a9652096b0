import json

import pytest

from src.rule_designs import RuleDesign
from src.tpi import DecisionMetric, TpiDesign
from src.utils.config_loader import (
    ConfigError,
    RunConfig,
    build_design,
    load_run_config,
    run_config_from_dict,
    save_run_config,
)


@pytest.mark.parametrize("alias, design", [("3+3", "std33"), ("4+4", "d4p4"), ("hybrid", "hybrid123"), ("TPI", "tpi")])
def test_design_aliases(alias, design):
    assert RunConfig(design=alias, curve=(0.1, 0.2)).design == design


@pytest.mark.parametrize("data, field", [
    ({"design": "5+5"}, "design"),
    ({"design": "std33", "cohort_size": 2}, "cohort_size"),
    ({"design": "tpi", "xi": 0.0}, "xi"),
    ({"design": "tpi", "prior_alpha": 0.0}, "prior_alpha"),
    ({"curve": [0.1, 1.5]}, "curve"),
    ({"curve": [0.1, 0.2], "num_doses": 3}, "num_doses"),
    ({"seed": -1}, "seed"),
    ({"reps": 0}, "reps"),
    ({"metric": "posterior"}, "metric"),
    ({"colour": "red"}, "colour"),
])
def test_errors_name_the_field(data, field):
    with pytest.raises(ConfigError, match=field):
        run_config_from_dict(data)


def test_overrides_take_precedence_and_skip_none():
    config = run_config_from_dict({"design": "tpi", "xi": 0.8, "curve": [0.1, 0.2]},
                                  {"xi": 0.75, "p_target": None, "metric": "raw-mass"})
    assert config.xi == 0.75
    assert config.p_target == 0.17
    assert config.tpi_config().decision_metric is DecisionMetric.RAW_MASS


def test_build_design():
    tpi = build_design(RunConfig(design="tpi", curve=(0.1, 0.2, 0.3), max_patients=18))
    assert isinstance(tpi, TpiDesign)
    assert tpi.num_doses == 3
    assert tpi.config.max_patients == 18

    hybrid = build_design(RunConfig(design="hybrid123", num_doses=5))
    assert isinstance(hybrid, RuleDesign)
    assert hybrid.config.is_hybrid
    assert hybrid.num_doses == 5


def test_dose_count_is_required_for_a_design():
    with pytest.raises(ConfigError, match="num_doses"):
        build_design(RunConfig(design="std33"))


def test_save_and_load(tmp_path):
    path = tmp_path / "run.json"
    config = RunConfig(design="d2p2", curve=(0.05, 0.2, 0.4), seed=17, reps=500)
    save_run_config(str(path), config)
    assert json.loads(path.read_text(encoding="utf-8"))["curve"] == [0.05, 0.2, 0.4]
    assert load_run_config(str(path)) == config


def test_load_rejects_non_object(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="config"):
        load_run_config(str(path))
    with pytest.raises(ConfigError, match="config"):
        load_run_config(str(tmp_path / "missing.json"))
