# sim.py
# Операционные характеристики дизайнов: Монте-Карло по произвольной кривой
# и точный перебор всех путей испытания для небольших лестниц доз.

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from .core import (
    DoseFindingDesign,
    DoseToxicityCurve,
    TrialOutcome,
    TrialState,
    advance,
    run_trial,
    to_outcome,
)
from .lockstep import LockstepBatch, run_lockstep
from .rule_designs import RuleDesign

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.15, 0.20, 0.25, 0.30, 0.35)

# Повторения группируются в блоки фиксированного размера; блок b использует
# поток default_rng([seed, b]), поэтому итог не зависит от числа процессов.
BLOCK_SIZE = 4096

# engine: "trial" - испытания по одному через core.run_trial,
# "lockstep" - векторный прогон блока (только дизайны на правилах)
ENGINE_TRIAL = "trial"
ENGINE_LOCKSTEP = "lockstep"
ENGINES = (ENGINE_TRIAL, ENGINE_LOCKSTEP)

MAX_ENUMERATION_DOSES = 4
MAX_ENUMERATION_COHORTS = 12


@dataclass(frozen=True)
class SimulationSummary:
    """
    Сводка по испытаниям. reps = 0 означает точные ожидания,
    полученные перебором путей, а не выборку.
    """
    reps: int
    mtd_distribution: Dict[Optional[int], float]
    mean_patients_per_dose: Tuple[float, ...]
    mean_total_patients: float
    mean_total_dlts: float
    prob_mtd_rate_at_least: Dict[float, float]
    mean_patients_at_or_above: Dict[float, float] = field(default_factory=dict)
    truncated_fraction: float = 0.0

    def to_dict(self) -> dict:
        """Словарь со стабильным порядком ключей для JSON."""
        return {
            "reps": self.reps,
            "mtd_distribution": {("none" if k is None else str(k)): v
                                 for k, v in self.mtd_distribution.items()},
            "mean_patients_per_dose": list(self.mean_patients_per_dose),
            "mean_total_patients": self.mean_total_patients,
            "mean_total_dlts": self.mean_total_dlts,
            "prob_mtd_rate_at_least": {f"{k:g}": v for k, v in self.prob_mtd_rate_at_least.items()},
            "mean_patients_at_or_above": {f"{k:g}": v
                                          for k, v in self.mean_patients_at_or_above.items()},
            "truncated_fraction": self.truncated_fraction,
        }


class _Tally:
    """Взвешенные накопители по исходам испытаний (вес - 1 или точная вероятность пути)."""

    def __init__(self, curve: DoseToxicityCurve, thresholds: Sequence[float]):
        self.curve = curve
        self.thresholds = tuple(thresholds)
        self.weight = 0.0
        self.mtd: Dict[Optional[int], float] = {}
        self.patients = np.zeros(curve.num_doses)
        self.dlts = 0.0
        self.at_least = np.zeros(len(self.thresholds))
        self.patients_above = np.zeros(len(self.thresholds))
        self.truncated = 0.0
        self._probs = np.asarray(curve.probs)

    def add(self, outcome: TrialOutcome, weight: float = 1.0) -> None:
        self.weight += weight
        self.mtd[outcome.mtd] = self.mtd.get(outcome.mtd, 0.0) + weight
        patients = np.fromiter((g.patients for g in outcome.groups), dtype=float,
                               count=len(outcome.groups))
        self.patients += weight * patients
        self.dlts += weight * outcome.total_dlts
        if outcome.ceiling_reached:
            self.truncated += weight
        for i, v in enumerate(self.thresholds):
            if outcome.mtd is not None and self.curve.prob(outcome.mtd) >= v:
                self.at_least[i] += weight
            self.patients_above[i] += weight * patients[self._probs >= v].sum()

    def add_batch(self, batch: LockstepBatch) -> None:
        """Блок испытаний векторного прогона, каждое с весом 1."""
        self.weight += batch.size
        doses, counts = np.unique(batch.mtd, return_counts=True)
        for dose, n in zip(doses.tolist(), counts.tolist()):
            key = dose if dose > 0 else None
            self.mtd[key] = self.mtd.get(key, 0.0) + n
        self.patients += batch.patients.sum(axis=0)
        self.dlts += float(batch.dlts.sum())
        self.truncated += float(np.count_nonzero(batch.ceiling))
        # доля DLT на выбранной МПД; -1 для испытаний без МПД
        rates = np.where(batch.mtd > 0, self._probs[np.maximum(batch.mtd - 1, 0)], -1.0)
        for i, v in enumerate(self.thresholds):
            self.at_least[i] += np.count_nonzero(rates >= v)
            self.patients_above[i] += float(batch.patients[:, self._probs >= v].sum())

    def merge(self, other: "_Tally") -> None:
        self.weight += other.weight
        for k, v in other.mtd.items():
            self.mtd[k] = self.mtd.get(k, 0.0) + v
        self.patients += other.patients
        self.dlts += other.dlts
        self.at_least += other.at_least
        self.patients_above += other.patients_above
        self.truncated += other.truncated

    def summary(self, reps: int) -> SimulationSummary:
        total = self.weight
        doses = sorted(k for k in self.mtd if k is not None)
        distribution = {k: self.mtd[k] / total for k in doses}
        if None in self.mtd:
            distribution[None] = self.mtd[None] / total
        per_dose = tuple(float(x) for x in self.patients / total)
        return SimulationSummary(
            reps=reps,
            mtd_distribution=distribution,
            mean_patients_per_dose=per_dose,
            mean_total_patients=float(sum(per_dose)),
            mean_total_dlts=self.dlts / total,
            prob_mtd_rate_at_least={v: float(x / total) for v, x in zip(self.thresholds, self.at_least)},
            mean_patients_at_or_above={v: float(x / total)
                                       for v, x in zip(self.thresholds, self.patients_above)},
            truncated_fraction=self.truncated / total,
        )


def _run_block(task) -> _Tally:
    design, curve, seed, block, count, thresholds, engine = task
    rng = np.random.default_rng([seed, block])
    tally = _Tally(curve, thresholds)
    if engine == ENGINE_LOCKSTEP:
        tally.add_batch(run_lockstep(design, curve, rng, count))
        return tally
    for _ in range(count):
        tally.add(run_trial(design, curve, rng))
    return tally


def simulate(design: DoseFindingDesign,
             curve: DoseToxicityCurve,
             reps: int,
             seed: int = 0,
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
             workers: int = 1,
             engine: str = ENGINE_TRIAL) -> SimulationSummary:
    """
    Наименование: simulate
    Назначение: reps независимых испытаний дизайна против кривой и их сводка.
    Входные параметры:
        design (DoseFindingDesign) - дизайн (правила или TPI).
        curve (DoseToxicityCurve) - истинные вероятности DLT.
        reps (int) - число повторений, >= 1.
        seed (int) - неотрицательное зерно.
        thresholds (Sequence[float]) - пороги v для P(доля DLT на МПД >= v).
        workers (int) - число процессов; на результат не влияет.
        engine (str) - "trial" или "lockstep"; lockstep только для дизайнов на правилах,
            его выборка при том же зерне другая, но тоже детерминирована.
    Возвращаемое значение:
        SimulationSummary
    """
    if reps < 1:
        raise ValueError(f"reps: должно быть >= 1, получено {reps}")
    if seed < 0:
        raise ValueError(f"seed: должно быть неотрицательным, получено {seed}")
    if not isinstance(curve, DoseToxicityCurve):
        curve = DoseToxicityCurve(tuple(curve))
    if curve.num_doses != design.num_doses:
        raise ValueError(f"Длина кривой {curve.num_doses} не совпадает с числом доз "
                         f"дизайна {design.num_doses}")
    if engine not in ENGINES:
        raise ValueError(f"engine: ожидалось одно из {ENGINES}, получено {engine!r}")
    if engine == ENGINE_LOCKSTEP and not isinstance(design, RuleDesign):
        raise ValueError(f"engine=lockstep: только для дизайнов на правилах, получено {design!r}")

    num_blocks = math.ceil(reps / BLOCK_SIZE)
    tasks = [(design, curve, seed, b, min(BLOCK_SIZE, reps - b * BLOCK_SIZE), tuple(thresholds),
              engine)
             for b in range(num_blocks)]
    logger.info("simulate: %r, %d повторений, %d блоков, процессов: %d, engine: %s",
                design, reps, num_blocks, workers, engine)

    if workers > 1 and num_blocks > 1:
        with Pool(processes=min(workers, num_blocks)) as pool:
            tallies = pool.map(_run_block, tasks)
    else:
        tallies = [_run_block(task) for task in tasks]

    total = tallies[0]
    for tally in tallies[1:]:
        total.merge(tally)
    summary = total.summary(reps)
    if summary.truncated_fraction > 0:
        logger.debug("доля прогонов с потолком лестницы: %.3g", summary.truncated_fraction)
    return summary


# -----------------------------------------------------------------------------
# Точный перебор путей
# -----------------------------------------------------------------------------
@dataclass
class PathEnumeration:
    """Терминальные исходы с точными вероятностями и масса незавершённых путей."""
    paths: List[Tuple[TrialOutcome, float]]
    unfinished_probability: float
    frontier: List[Tuple[TrialState, float]] = field(default_factory=list)

    @property
    def total_probability(self) -> float:
        return math.fsum(p for _, p in self.paths)


def enumerate_paths(design: DoseFindingDesign,
                    curve: DoseToxicityCurve,
                    max_cohorts: int = MAX_ENUMERATION_COHORTS,
                    merge_states: bool = True) -> PathEnumeration:
    """
    Наименование: enumerate_paths
    Назначение: полное дерево исходов когорт с точными биномиальными вероятностями.
        При merge_states одинаковые состояния (без журнала когорт) сливаются,
        иначе каждый путь хранится отдельно со своим журналом.
    Входные параметры:
        design (DoseFindingDesign) - дизайн.
        curve (DoseToxicityCurve) - истинные вероятности DLT.
        max_cohorts (int) - глубина дерева, не более 12.
        merge_states (bool) - сливать ли совпадающие состояния.
    Возвращаемое значение:
        PathEnumeration
    """
    if not isinstance(curve, DoseToxicityCurve):
        curve = DoseToxicityCurve(tuple(curve))
    if design.num_doses > MAX_ENUMERATION_DOSES:
        raise ValueError(f"Перебор ограничен {MAX_ENUMERATION_DOSES} дозами, получено {design.num_doses}")
    if not 1 <= max_cohorts <= MAX_ENUMERATION_COHORTS:
        raise ValueError(f"max_cohorts вне 1..{MAX_ENUMERATION_COHORTS}: {max_cohorts}")
    if curve.num_doses != design.num_doses:
        raise ValueError("Длина кривой не совпадает с числом доз дизайна")

    pmf_cache: Dict[Tuple[int, float], np.ndarray] = {}

    def pmf(size: int, p: float) -> np.ndarray:
        key = (size, p)
        if key not in pmf_cache:
            pmf_cache[key] = binom.pmf(np.arange(size + 1), size, p)
        return pmf_cache[key]

    def key_of(state: TrialState):
        return state.merge_key() if merge_states else (state.merge_key(), state.cohort_log)

    frontier: Dict[object, Tuple[TrialState, float]] = {}
    initial = design.initial_state()
    frontier[key_of(initial)] = (initial, 1.0)
    leaves: Dict[object, Tuple[TrialState, float]] = {}

    for depth in range(max_cohorts):
        if not frontier:
            break
        next_frontier: Dict[object, Tuple[TrialState, float]] = {}
        for state, prob in frontier.values():
            size = design.cohort_size(state)
            probs = pmf(size, curve.prob(state.current_dose))
            for dlts in range(size + 1):
                if probs[dlts] <= 0.0:
                    continue
                child = advance(design, state, dlts, size)
                bucket = next_frontier if child.is_active else leaves
                key = key_of(child)
                if key in bucket:
                    bucket[key] = (bucket[key][0], bucket[key][1] + prob * float(probs[dlts]))
                else:
                    bucket[key] = (child, prob * float(probs[dlts]))
        frontier = next_frontier
        logger.debug("глубина %d: активных состояний %d, завершённых %d",
                     depth + 1, len(frontier), len(leaves))

    unfinished = math.fsum(p for _, p in frontier.values())
    if unfinished > 0:
        logger.warning("перебор остановлен на %d когортах, незавершённая масса %.3g",
                       max_cohorts, unfinished)
    paths = [(to_outcome(design, state), prob) for state, prob in leaves.values()]
    return PathEnumeration(paths, unfinished, list(frontier.values()))


def summarize_paths(enumeration: PathEnumeration,
                    curve: DoseToxicityCurve,
                    thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> SimulationSummary:
    """Точные ожидания по перебору путей (условно на завершение испытания)."""
    if not enumeration.paths:
        raise ValueError("Нет завершённых путей")
    tally = _Tally(curve, thresholds)
    for outcome, prob in enumeration.paths:
        tally.add(outcome, prob)
    return tally.summary(reps=0)
