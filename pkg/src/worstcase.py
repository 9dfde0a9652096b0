# worstcase.py
# Наихудшие вероятности r(v) выбора слишком токсичной МПД:
# замкнутые формулы для 3+3, 2+2, 4+4 и гибрида 1+2+3/3+3, ряд-эталон,
# кривая наихудшего случая, проверка Монте-Карло и сетка значений для графика.

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import pandas as pd

from .core import DoseToxicityCurve
from .rule_designs import HYBRID, RuleDesign, RuleDesignConfig
from .sim import ENGINE_LOCKSTEP, simulate

logger = logging.getLogger(__name__)

DESIGNS = ("d3p3", "d2p2", "d4p4", "hybrid123")

COHORT_SIZES = {"d3p3": 3, "d2p2": 2, "d4p4": 4, "hybrid123": HYBRID}

COLUMN_NAMES = {
    "d3p3": "r_3p3",
    "d2p2": "r_2p2",
    "d4p4": "r_4p4",
    "hybrid123": "r_hybrid123",
}

LABELS = {"d3p3": "3+3", "d2p2": "2+2", "d4p4": "4+4", "hybrid123": "1+2+3/3+3"}

# стили линий как в легенде графика r(v)
LINE_STYLES = {"d3p3": "solid", "d2p2": "dashed", "d4p4": "dotted", "hybrid123": "dashdot"}

SERIES_MAX_TERMS = 100_000


@dataclass(frozen=True)
class WorstCaseQuery:
    design: str
    v: float

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"Unknown design: {self.design}")
        if not 0.0 <= self.v <= 1.0:
            raise ValueError(f"v вне (0, 1]: {self.v}")


class MonteCarloBound(NamedTuple):
    estimate: float
    truncated_fraction: float


# -----------------------------------------------------------------------------
# Замкнутые формулы
# -----------------------------------------------------------------------------
def _r_d3p3(v: float) -> float:
    q = 1.0 - v
    return 1.0 - (3 * v * q ** 2 * (1 - q ** 3) + (3 * v ** 2 * q + v ** 3)) / \
        (1 - q ** 3 * (3 * v ** 2 * q + v ** 3))


def _r_d2p2(v: float) -> float:
    q = 1.0 - v
    return 1.0 - (2 * v * q * (1 - q ** 2) + v ** 2) / (1 - q ** 2 * v ** 2)


def _r_d4p4(v: float) -> float:
    q = 1.0 - v
    two_or_more = 1 - q ** 4 - 4 * v * q ** 3
    return 1.0 - (4 * v * q ** 3 * (1 - q ** 4) + two_or_more) / (1 - q ** 4 * two_or_more)


def _r_hybrid123(v: float) -> float:
    q = 1.0 - v
    return 1.0 - v * (1 - q ** 5) / (1 - q * (1 - q ** 5 - 5 * v * q ** 4))


CLOSED_FORMS = {
    "d3p3": _r_d3p3,
    "d2p2": _r_d2p2,
    "d4p4": _r_d4p4,
    "hybrid123": _r_hybrid123,
}


def series_factors(design: str, v: float) -> Tuple[float, float, float]:
    """
    Наименование: series_factors
    Назначение: множители ряда r(v) = 1 - sum_k a^k * c * b^k.
        a - доза пройдена первой когортой без DLT (для гибрида - одним пациентом);
        c - первая токсичная доза признана недопустимой;
        b - пройденная доза при возврате набирает достаточно DLT для исключения.
    Входные параметры:
        design (str) - идентификатор дизайна.
        v (float) - доля DLT.
    Возвращаемое значение:
        Tuple[float, float, float] - (a, c, b).
    """
    q = 1.0 - v
    if design == "hybrid123":
        return q, v * (1 - q ** 5), 1 - q ** 5 - 5 * v * q ** 4
    size = COHORT_SIZES[design]
    none = q ** size
    one = size * v * q ** (size - 1)
    two_or_more = 1 - none - one
    return none, one * (1 - none) + two_or_more, two_or_more


def r_closed_form(q: WorstCaseQuery) -> float:
    """r(v) по замкнутой формуле; v = 0 - предел, равный 1."""
    if q.v == 0.0:
        return 1.0
    return CLOSED_FORMS[q.design](q.v)


def r_series(q: WorstCaseQuery, tol: float = 1e-15) -> float:
    """Частичные суммы ряда до первого члена меньше tol; независимая проверка замкнутой формы."""
    if tol <= 0:
        raise ValueError(f"tol должен быть положительным: {tol}")
    if q.v == 0.0:
        return 1.0
    a, c, b = series_factors(q.design, q.v)
    ratio = a * b
    total = 0.0
    term = c
    for _ in range(SERIES_MAX_TERMS):
        total += term
        term *= ratio
        if term < tol:
            break
    return 1.0 - total


def worst_case_curve(design: str, v: float, d: int, levels: int) -> DoseToxicityCurve:
    """Кривая с нулями ниже дозы d и v начиная с d."""
    if design not in DESIGNS:
        raise ValueError(f"Unknown design: {design}")
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"v вне [0, 1]: {v}")
    if d < 1 or d > levels:
        raise ValueError(f"Доза d={d} вне 1..{levels}")
    return DoseToxicityCurve(tuple(0.0 if i < d else float(v) for i in range(1, levels + 1)))


def design_for(design: str, num_doses: int) -> RuleDesign:
    if design not in DESIGNS:
        raise ValueError(f"Unknown design: {design}")
    return RuleDesign(RuleDesignConfig(cohort_size=COHORT_SIZES[design], num_doses=num_doses))


def r_monte_carlo(q: WorstCaseQuery,
                  d: int = 3,
                  levels: int = 200,
                  reps: int = 100_000,
                  seed: int = 0,
                  workers: int = 1,
                  engine: str = ENGINE_LOCKSTEP) -> MonteCarloBound:
    """
    Наименование: r_monte_carlo
    Назначение: эмпирическая доля испытаний, чья МПД имеет истинную долю DLT >= v,
        на кривой наихудшего случая. Испытания, упёршиеся в верхнюю дозу,
        учитываются отдельно как truncated_fraction.
    Входные параметры:
        q (WorstCaseQuery) - дизайн и v.
        d (int) - первая токсичная доза, d >= 2.
        levels (int) - длина лестницы доз.
        reps (int) - число повторений.
        seed (int) - зерно.
        workers (int) - число процессов.
        engine (str) - движок simulate, по умолчанию векторный "lockstep".
    Возвращаемое значение:
        MonteCarloBound - (оценка, доля усечённых прогонов).
    """
    if d < 2:
        raise ValueError("Для сравнения с замкнутой формой нужна d >= 2")
    curve = worst_case_curve(q.design, q.v, d, levels)
    summary = simulate(design_for(q.design, levels), curve, reps, seed,
                       thresholds=(q.v,), workers=workers, engine=engine)
    if summary.truncated_fraction > 0:
        logger.warning("%s, v=%.3f: %.2e прогонов упёрлись в верхнюю дозу",
                       q.design, q.v, summary.truncated_fraction)
    return MonteCarloBound(summary.prob_mtd_rate_at_least[q.v], summary.truncated_fraction)


def binomial_standard_error(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


# -----------------------------------------------------------------------------
# Сетка значений и график
# -----------------------------------------------------------------------------
def parse_grid(text: str) -> List[float]:
    """'start:stop:step' -> значения от start до stop включительно."""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ValueError(f"Сетка задаётся как start:stop:step, получено {text!r}") from None
    if step <= 0 or start > stop:
        raise ValueError(f"Недопустимая сетка: {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def curve_grid(designs: Sequence[str], v_grid: Iterable[float]) -> pd.DataFrame:
    """Таблица r(v): столбец v и по столбцу на дизайн."""
    designs = list(designs)
    for design in designs:
        if design not in DESIGNS:
            raise ValueError(f"Unknown design: {design}")
    rows = []
    for v in v_grid:
        row: Dict[str, float] = {"v": float(v)}
        for design in designs:
            row[COLUMN_NAMES[design]] = r_closed_form(WorstCaseQuery(design, float(v)))
        rows.append(row)
    return pd.DataFrame(rows, columns=["v"] + [COLUMN_NAMES[d] for d in designs])


def verify_grid(designs: Sequence[str], v_grid: Iterable[float],
                tol: float = 1e-12) -> List[Tuple[str, float, float]]:
    """Точки, где замкнутая форма и ряд расходятся больше чем на tol: (дизайн, v, разница)."""
    failures = []
    for v in v_grid:
        for design in designs:
            query = WorstCaseQuery(design, float(v))
            diff = abs(r_closed_form(query) - r_series(query, tol=1e-15))
            if diff > tol:
                failures.append((design, float(v), diff))
    return failures


def plot_worst_case_curves(frame: pd.DataFrame, path: str, title: Optional[str] = None) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for design, column in COLUMN_NAMES.items():
        if column in frame.columns:
            ax.plot(frame["v"], frame[column], color="black",
                    linestyle=LINE_STYLES[design], label=LABELS[design])
    ax.set_xlabel("v")
    ax.set_ylabel("max P(DLT rate at MTD >= v)")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    logger.info("график сохранён в %s", path)
