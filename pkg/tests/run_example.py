import os

from src.core import DoseToxicityCurve
from src.model import DoseFindingModel
from src.utils.config_loader import build_design, load_run_config

if __name__ == "__main__":
    # Папка tests
    TESTS_DIR = os.path.dirname(__file__)

    # Корень проекта
    PROJECT_DIR = os.path.dirname(TESTS_DIR)

    scenario = os.path.join(PROJECT_DIR, "scenarios", "std33_example.json")

    print("Scenario path:", scenario)
    assert os.path.exists(scenario), "Сценарий не найден!"

    config = load_run_config(scenario)
    model = DoseFindingModel(build_design(config), DoseToxicityCurve(config.curve), seed=config.seed)

    steps = 0
    while model.running and steps < 100:
        model.step()
        steps += 1

    outcome = model.outcome()
    print(model.trace())
    print("cohorts:", steps)
    print("MTD:", outcome.mtd)
    print("patients:", outcome.total_patients)
    print("DLTs:", outcome.total_dlts)
