# isotonic.py
# Взвешенная изотоническая регрессия (PAVA), эталонный перебор разбиений
# и два правила выбора МПД по монотонной подгонке.

import itertools
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import isotonic_regression

from .core import TrialState


TOLERANCE = 1e-12
BRUTE_FORCE_MAX_LEN = 12


@dataclass(frozen=True)
class IsotonicFit:
    """Монотонная подгонка p*_i с весами, по которым она получена."""
    values: Tuple[float, ...]
    weights: Tuple[float, ...]
    fitted: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.fitted)

    def sse(self) -> float:
        v = np.asarray(self.values)
        f = np.asarray(self.fitted)
        return float(np.sum(np.asarray(self.weights) * (v - f) ** 2))

    def is_nondecreasing(self, tol: float = TOLERANCE) -> bool:
        return all(a <= b + tol for a, b in zip(self.fitted, self.fitted[1:]))


class EmpiricalRates(NamedTuple):
    values: List[float]
    weights: List[float]
    doses: List[int]


def _validate(values: Sequence[float], weights: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("Нужен непустой одномерный вектор значений")
    if w.shape != y.shape:
        raise ValueError(f"Длины значений и весов различаются: {y.size} и {w.size}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(w)):
        raise ValueError("Значения и веса должны быть конечными")
    if np.any(w <= 0):
        raise ValueError("Веса должны быть строго положительными")
    return y, w


def pava(values: Sequence[float], weights: Sequence[float]) -> IsotonicFit:
    """
    Наименование: pava
    Назначение: неубывающая подгонка, минимизирующая sum w_i (v_i - f_i)^2.
    Входные параметры:
        values (Sequence[float]) - наблюдённые оценки по дозам.
        weights (Sequence[float]) - положительные веса.
    Возвращаемое значение:
        IsotonicFit - подгонка; уже монотонный вход возвращается без изменений.
    """
    y, w = _validate(values, weights)
    result = isotonic_regression(y, weights=w, increasing=True)
    return IsotonicFit(tuple(y.tolist()), tuple(w.tolist()), tuple(float(f) for f in result.x))


def brute_force_isotonic(values: Sequence[float], weights: Sequence[float]) -> IsotonicFit:
    """
    Эталон для PAVA: перебор всех разбиений на подряд идущие блоки
    со взвешенными средними, из монотонных берётся минимум SSE.
    """
    y, w = _validate(values, weights)
    n = y.size
    if n > BRUTE_FORCE_MAX_LEN:
        raise ValueError(f"Перебор ограничен длиной {BRUTE_FORCE_MAX_LEN}, получено {n}")

    best_fit: Optional[np.ndarray] = None
    best_sse = float("inf")
    for cuts in itertools.product((False, True), repeat=n - 1):
        bounds = [0] + [i + 1 for i, cut in enumerate(cuts) if cut] + [n]
        fitted = np.empty(n)
        for lo, hi in zip(bounds, bounds[1:]):
            fitted[lo:hi] = np.dot(w[lo:hi], y[lo:hi]) / w[lo:hi].sum()
        if np.any(np.diff(fitted) < -TOLERANCE):
            continue
        sse = float(np.sum(w * (y - fitted) ** 2))
        if sse < best_sse:
            best_sse, best_fit = sse, fitted

    # разбиение на один блок всегда монотонно
    return IsotonicFit(tuple(y.tolist()), tuple(w.tolist()), tuple(best_fit.tolist()))


def empirical_rates(state: TrialState) -> EmpiricalRates:
    """Доли t_i/n_i с весами n_i по посещённым дозам; непосещённые пропускаются."""
    values, weights, doses = [], [], []
    for dose, group in enumerate(state.groups, start=1):
        if group.patients > 0:
            values.append(group.dlts / group.patients)
            weights.append(float(group.patients))
            doses.append(dose)
    return EmpiricalRates(values, weights, doses)


def _dose_map(fit: IsotonicFit, dose_map: Optional[Sequence[int]]) -> List[int]:
    if dose_map is None:
        return list(range(1, len(fit) + 1))
    if len(dose_map) != len(fit):
        raise ValueError("Отображение индексов в дозы не совпадает по длине с подгонкой")
    return list(dose_map)


def mtd_largest_below(fit: IsotonicFit, p_target: float,
                      dose_map: Optional[Sequence[int]] = None) -> Optional[int]:
    """Наибольшая доза с p*_i <= p_target; None, если такой нет."""
    doses = _dose_map(fit, dose_map)
    selected = None
    for dose, value in zip(doses, fit.fitted):
        if value <= p_target + TOLERANCE:
            selected = dose
    return selected


def mtd_closest(fit: IsotonicFit, p_target: float,
                dose_map: Optional[Sequence[int]] = None) -> Optional[int]:
    """
    Наименование: mtd_closest
    Назначение: доза с p*_i, ближайшим к p_target.
        Ничья (равные расстояния в пределах допуска): если среднее по ничьей
        меньше p_target - берётся наибольшая доза из ничьей, иначе наименьшая.
    Входные параметры:
        fit (IsotonicFit) - монотонная подгонка.
        p_target (float) - целевая доля DLT.
        dose_map (Optional[Sequence[int]]) - номера доз для позиций подгонки.
    Возвращаемое значение:
        Optional[int] - номер дозы или None для пустой подгонки.
    """
    doses = _dose_map(fit, dose_map)
    if not doses:
        return None
    distances = [abs(v - p_target) for v in fit.fitted]
    best = min(distances)
    tied = [i for i, dist in enumerate(distances) if dist <= best + TOLERANCE]

    # равноудалённые значения по разные стороны от цели тоже считаются ничьей
    tie_mean = sum(fit.fitted[i] for i in tied) / len(tied)
    if tie_mean < p_target - TOLERANCE:
        return doses[max(tied)]
    return doses[min(tied)]
