import csv
import os
import time
from typing import Dict, List, Tuple

from src.core import DoseToxicityCurve
from src.sim import DEFAULT_THRESHOLDS, simulate
from src.utils.config_loader import RunConfig, build_design


# ----------------------------------------------------------
#  Набор кривых доза-токсичность для сравнения дизайнов
# ----------------------------------------------------------
CURVES: List[Tuple[str, Tuple[float, ...]]] = [
    ("low", (0.02, 0.05, 0.08, 0.12, 0.18)),
    ("moderate", (0.05, 0.10, 0.20, 0.30, 0.45)),
    ("steep", (0.05, 0.15, 0.30, 0.50, 0.70)),
    ("toxic", (0.25, 0.35, 0.45, 0.55, 0.65)),
]

DESIGNS = ["std33", "d2p2", "d4p4", "hybrid123", "tpi"]


# ----------------------------------------------------------
#  Один дизайн на одной кривой
# ----------------------------------------------------------
def run_single_test(curve_name: str, curve: Tuple[float, ...], design: str,
                    reps: int, seed: int, workers: int = 1) -> Dict:
    start_time = time.time()
    config = RunConfig(design=design, curve=curve, seed=seed, reps=reps, workers=workers)
    summary = simulate(build_design(config), DoseToxicityCurve(curve), reps, seed, workers=workers)
    runtime = time.time() - start_time

    # доза с истинной долей DLT, ближайшей к 0.2, считается правильной
    target = min(range(1, len(curve) + 1), key=lambda d: abs(curve[d - 1] - 0.2))

    return {
        "curve": curve_name,
        "design": design,
        "p_correct": round(summary.mtd_distribution.get(target, 0.0), 4),
        "p_no_mtd": round(summary.mtd_distribution.get(None, 0.0), 4),
        "mean_patients": round(summary.mean_total_patients, 2),
        "mean_dlts": round(summary.mean_total_dlts, 2),
        "p_rate_ge_0.3": round(summary.prob_mtd_rate_at_least[0.30], 4),
        "runtime": round(runtime, 4),
    }


# ----------------------------------------------------------
#  Основной батч-раннер
# ----------------------------------------------------------
def run_experiments(reps: int = 20000, seed: int = 0, workers: int = 1):
    BASE_DIR = os.path.dirname(os.path.dirname(__file__))
    CSV_OUTPUT = os.path.join(BASE_DIR, "experiment_results.csv")
    assert 0.30 in DEFAULT_THRESHOLDS

    with open(CSV_OUTPUT, "w", newline="") as f:
        writer = None
        for curve_name, curve in CURVES:
            print(f"\n=== Кривая: {curve_name} {curve} ===")
            for design in DESIGNS:
                result = run_single_test(curve_name, curve, design, reps, seed, workers)
                if writer is None:
                    writer = csv.DictWriter(f, fieldnames=list(result))
                    writer.writeheader()
                writer.writerow(result)
                print(f"  → {design}: P(верная МПД)={result['p_correct']}, "
                      f"пациентов={result['mean_patients']}, t={result['runtime']} сек.")

    print("\nГотово! Результаты записаны в", CSV_OUTPUT)


# ----------------------------------------------------------
#  Запуск
# ----------------------------------------------------------
if __name__ == "__main__":
    run_experiments()
