# tpi.py
# Байесовский дизайн интервалов вероятности токсичности (TPI):
# бета-биномиальные апостериорные, правило трёх интервалов, правило исключения,
# таблица мониторинга и изотоническая оценка МПД с правилом ничьих.

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

from scipy.special import betainc, betaincc

from .core import (
    Action,
    CeilingPolicy,
    Decision,
    DoseFindingDesign,
    DoseGroupRecord,
    DoseToxicityCurve,
    FloorPolicy,
    TrialOutcome,
    TrialState,
    run_trial,
)
from .isotonic import mtd_closest, pava
from .rule_designs import MonitoringTable


class DecisionMetric(Enum):
    RAW_MASS = "raw_mass"
    LENGTH_NORMALIZED = "length_normalized"


class WeightConvention(Enum):
    VARIANCE = "variance"
    INVERSE_VARIANCE = "inverse_variance"


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name}: параметр бета-распределения должен быть > 0, получено {value}")


@dataclass(frozen=True)
class BetaPosterior:
    params: BetaParams
    mean: float
    sd: float

    @classmethod
    def from_params(cls, params: BetaParams) -> "BetaPosterior":
        a, b = params.alpha, params.beta
        s = a + b
        return cls(params, a / s, math.sqrt(a * b / (s * s * (s + 1.0))))

    @property
    def variance(self) -> float:
        return self.sd ** 2


@dataclass(frozen=True)
class TpiConfig:
    """Параметры по умолчанию - набор, при котором таблица TPI совпадает с таблицей 3+3."""
    p_target: float = 0.17
    k1: float = 1.0
    k2: float = 0.1
    xi: float = 0.7
    prior: BetaParams = field(default_factory=lambda: BetaParams(0.005, 0.005))
    cohort_size: int = 3
    max_patients: int = 30
    decision_metric: DecisionMetric = DecisionMetric.LENGTH_NORMALIZED
    weight_convention: WeightConvention = WeightConvention.VARIANCE
    modified_stopping: bool = False
    stop_group_size: int = 6
    stop_max_dlts: int = 1
    floor_policy: FloorPolicy = FloorPolicy.STAY
    ceiling_policy: CeilingPolicy = CeilingPolicy.STAY

    def __post_init__(self):
        if not 0.0 < self.p_target < 1.0:
            raise ValueError(f"p_target: ожидалось значение в (0, 1), получено {self.p_target}")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError(f"k1, k2: должны быть неотрицательными, получено {self.k1}, {self.k2}")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError(f"xi: ожидалось значение в (0, 1], получено {self.xi}")
        if self.cohort_size < 1:
            raise ValueError(f"cohort_size: должно быть >= 1, получено {self.cohort_size}")
        if self.max_patients < self.cohort_size:
            raise ValueError(f"max_patients: не меньше размера когорты, получено {self.max_patients}")
        if self.stop_group_size < 1 or self.stop_max_dlts < 0:
            raise ValueError("stop_group_size / stop_max_dlts: недопустимые значения")
        if self.ceiling_policy is CeilingPolicy.EXPAND_THEN_STOP:
            raise ValueError("ceiling_policy: для TPI допустимы stay и stop")


# -----------------------------------------------------------------------------
# Апостериорное распределение и функция распределения
# -----------------------------------------------------------------------------
def posterior(prior: BetaParams, n: int, t: int) -> BetaPosterior:
    """Сопряжённое обновление: Beta(alpha + t, beta + n - t)."""
    if n < 0 or t < 0 or t > n:
        raise ValueError(f"Недопустимые счётчики n={n}, t={t}")
    return BetaPosterior.from_params(BetaParams(prior.alpha + t, prior.beta + n - t))


def beta_cdf(x: float, params: BetaParams) -> float:
    """P(p <= x) для Beta(alpha, beta): регуляризованная неполная бета-функция."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x вне [0, 1]: {x}")
    return float(betainc(params.alpha, params.beta, x))


def beta_sf(x: float, params: BetaParams) -> float:
    """P(p > x); считается напрямую, без вычитания из единицы."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x вне [0, 1]: {x}")
    return float(betaincc(params.alpha, params.beta, x))


def interval_masses(post: BetaPosterior, config: TpiConfig) -> Tuple[float, float, float]:
    """
    Наименование: interval_masses
    Назначение: оценки трёх интервалов (0, a), [a, b], (b, 1), где
        a = p_T - K1*sd, b = p_T + K2*sd, концы обрезаны до [0, 1].
        raw_mass - апостериорная масса интервала; length_normalized - масса,
        делённая на длину интервала (пустой интервал получает 0).
    Входные параметры:
        post (BetaPosterior) - апостериорное распределение на текущей дозе.
        config (TpiConfig) - параметры дизайна.
    Возвращаемое значение:
        Tuple[float, float, float] - (m1, m2, m3).
    """
    a = min(max(config.p_target - config.k1 * post.sd, 0.0), 1.0)
    b = min(max(config.p_target + config.k2 * post.sd, 0.0), 1.0)
    cdf_a = beta_cdf(a, post.params)
    cdf_b = beta_cdf(b, post.params)
    masses = (cdf_a, max(cdf_b - cdf_a, 0.0), beta_sf(b, post.params))
    if config.decision_metric is DecisionMetric.RAW_MASS:
        return masses

    lengths = (a, b - a, 1.0 - b)
    return tuple(m / length if length > 0 else 0.0 for m, length in zip(masses, lengths))


def exclusion_check(n: int, t: int, config: TpiConfig) -> bool:
    """Истина, если P(p > p_T | данные) > xi."""
    post = posterior(config.prior, n, t)
    return beta_sf(config.p_target, post.params) > config.xi


def _argmax_action(m1: float, m2: float, m3: float) -> Action:
    # ничьи разрешаются в сторону более осторожного действия: D, затем S
    if m3 >= m1 and m3 >= m2:
        return Action.DE_ESCALATE
    if m2 >= m1:
        return Action.STAY
    return Action.ESCALATE


def tpi_decision(n: int, t: int, config: TpiConfig, next_dose_excluded: bool = False) -> Action:
    """
    Наименование: tpi_decision
    Назначение: решение TPI после данных на текущей дозе.
        Сначала правило исключения (DU), затем argmax по трём интервалам: E/S/D.
        Если следующая доза исключена, сравниваются только первые два интервала,
        и любой победитель означает остаться на дозе.
    Входные параметры:
        n (int) - пациентов на дозе, n >= cohort_size.
        t (int) - DLT на дозе.
        config (TpiConfig) - параметры.
        next_dose_excluded (bool) - исключена ли следующая доза.
    Возвращаемое значение:
        Action
    """
    if n < 0 or t < 0 or t > n:
        raise ValueError(f"Недопустимые счётчики n={n}, t={t}")
    if n < config.cohort_size:
        raise ValueError(f"Решение принимается после когорты: n={n} < {config.cohort_size}")

    if exclusion_check(n, t, config):
        return Action.DE_ESCALATE_UNACCEPTABLE

    if next_dose_excluded:
        # эскалация невозможна: победа первого или второго интервала - остаться
        return Action.STAY
    return _argmax_action(*interval_masses(posterior(config.prior, n, t), config))


# ключ кэша: (n, t, конфигурация, флаг исключённой следующей дозы)
DECISION_CACHE_SIZE = 4096


@lru_cache(maxsize=DECISION_CACHE_SIZE)
def cached_tpi_decision(n: int, t: int, config: TpiConfig, next_dose_excluded: bool) -> Action:
    return tpi_decision(n, t, config, next_dose_excluded)


def tpi_monitoring_table(config: TpiConfig, group_sizes: Iterable[int] = (3, 6)) -> MonitoringTable:
    """
    Наименование: tpi_monitoring_table
    Назначение: решения TPI по достижимым клеткам (n, t) для заданных размеров групп.
        Клетка (n, t) достижима, если из достижимой клетки (n - c, t') с
        действием не DU когорта из c пациентов даёт t - t' DLT: доза,
        признанная недопустимой, больше не лечится.
    Входные параметры:
        config (TpiConfig) - параметры.
        group_sizes (Iterable[int]) - размеры групп, кратные размеру когорты c.
    Возвращаемое значение:
        MonitoringTable
    """
    c = config.cohort_size
    sizes = sorted(set(group_sizes))
    if not sizes:
        raise ValueError("Нужен хотя бы один размер группы")
    for n in sizes:
        if n < c or n % c:
            raise ValueError(f"Размер группы {n} не кратен размеру когорты {c}")

    cells: Dict[Tuple[int, int], Action] = {}
    open_counts = {0}
    for n in range(c, sizes[-1] + 1, c):
        candidates = sorted({t0 + t for t0 in open_counts for t in range(c + 1)})
        open_counts = set()
        for t in candidates:
            action = tpi_decision(n, t, config)
            if n in sizes:
                cells[(n, t)] = action
            if action is not Action.DE_ESCALATE_UNACCEPTABLE:
                open_counts.add(t)
        if not open_counts:
            break
    return MonitoringTable(cells, title="TPI")


# -----------------------------------------------------------------------------
# Выбор МПД
# -----------------------------------------------------------------------------
def tpi_select_mtd(state: TrialState, config: TpiConfig) -> Optional[int]:
    """
    Наименование: tpi_select_mtd
    Назначение: апостериорные средние по посещённым неисключённым дозам,
        изотоническая подгонка с весами sd^2 (или 1/sd^2), затем доза,
        ближайшая к p_T, с правилом ничьих.
    Входные параметры:
        state (TrialState) - завершённое испытание.
        config (TpiConfig) - параметры.
    Возвращаемое значение:
        Optional[int] - МПД или None, если кандидатов нет.
    """
    doses = [dose for dose in state.visited_doses() if dose not in state.excluded]
    if not doses:
        return None

    posts = [posterior(config.prior, state.group(d).patients, state.group(d).dlts) for d in doses]
    if config.weight_convention is WeightConvention.VARIANCE:
        weights = [p.variance for p in posts]
    else:
        weights = [1.0 / p.variance for p in posts]
    fit = pava([p.mean for p in posts], weights)
    return mtd_closest(fit, config.p_target, doses)


# -----------------------------------------------------------------------------
# Дизайн для автомата испытания
# -----------------------------------------------------------------------------
class TpiDesign(DoseFindingDesign):
    """TPI поверх core: фиксированный бюджет пациентов и необязательное правило остановки 1 из 6."""

    def __init__(self, config: TpiConfig, num_doses: int):
        if num_doses < 1:
            raise ValueError(f"num_doses: должно быть >= 1, получено {num_doses}")
        self.config = config
        self.num_doses = num_doses
        self.floor_policy = config.floor_policy

    def __repr__(self) -> str:
        return f"TpiDesign(p_T={self.config.p_target}, D={self.num_doses})"

    def cohort_size(self, state: TrialState) -> int:
        return min(self.config.cohort_size, self.config.max_patients - state.total_patients)

    def _stopping_rule_met(self, group: DoseGroupRecord) -> bool:
        config = self.config
        return (config.modified_stopping
                and group.patients >= config.stop_group_size
                and group.dlts <= config.stop_max_dlts)

    def decide(self, state: TrialState) -> Decision:
        config = self.config
        dose = state.current_dose
        group = state.group(dose)
        at_top = dose == self.num_doses
        next_excluded = not at_top and dose + 1 in state.excluded
        budget_spent = state.total_patients >= config.max_patients
        if budget_spent and group.patients < config.cohort_size:
            return Decision(Action.STOP)

        action = cached_tpi_decision(group.patients, group.dlts, config, next_excluded)

        if action is Action.DE_ESCALATE_UNACCEPTABLE:
            landing = dose - 1
            stop_after = budget_spent or (landing >= 1 and self._stopping_rule_met(state.group(landing)))
            return Decision(action, stop_after=stop_after)

        if budget_spent:
            return Decision(Action.STOP)
        if (next_excluded or at_top) and self._stopping_rule_met(group):
            return Decision(Action.STOP)

        if action is Action.ESCALATE and at_top:
            if config.ceiling_policy is CeilingPolicy.STOP:
                return Decision(Action.STOP, ceiling=True)
            return Decision(Action.STAY, ceiling=True)
        return Decision(action)

    def select_mtd(self, state: TrialState) -> Optional[int]:
        return tpi_select_mtd(state, self.config)


def tpi_run(config: TpiConfig,
            curve: Union[DoseToxicityCurve, Sequence[float]],
            rng=None) -> TrialOutcome:
    if not isinstance(curve, DoseToxicityCurve):
        curve = DoseToxicityCurve(tuple(curve))
    return run_trial(TpiDesign(config, curve.num_doses), curve, rng)
