# lockstep.py
# Векторный прогон блока испытаний для дизайнов на правилах (c+c и гибрид):
# все незавершённые испытания блока продвигаются на одну когорту за шаг,
# числа DLT разыгрываются одним биномиальным вызовом numpy на шаг.

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import MAX_COHORTS_PER_TRIAL, CeilingPolicy, DoseToxicityCurve
from .rule_designs import HybridRevisit, RuleDesign, RuleDesignConfig

logger = logging.getLogger(__name__)

_ACCELERATE = 0
_STANDARD = 1


@dataclass
class LockstepBatch:
    """
    Итоги блока испытаний. Строка - одно испытание.
    mtd - номер дозы с 1, 0 означает остановку без МПД.
    """
    mtd: np.ndarray
    patients: np.ndarray
    dlts: np.ndarray
    ceiling: np.ndarray

    @property
    def size(self) -> int:
        return int(self.mtd.shape[0])

    def mtd_of(self, row: int) -> Optional[int]:
        value = int(self.mtd[row])
        return value if value > 0 else None


def _standard_counts(patients: np.ndarray, config: RuleDesignConfig) -> np.ndarray:
    """Часть группы, по которой работает правило 3+3 (как _standard_count в rule_designs)."""
    if config.is_hybrid and config.hybrid_revisit is HybridRevisit.STANDARD:
        return np.where(patients % 3 == 1, patients - 1, patients)
    return patients


def _accepted(patients: np.ndarray, dlts: np.ndarray, config: RuleDesignConfig) -> np.ndarray:
    return (_standard_counts(patients, config) == config.full_group) & (dlts <= 1)


def select_mtd_rows(patients: np.ndarray, dlts: np.ndarray, config: RuleDesignConfig) -> np.ndarray:
    """Наибольшая принятая доза по строкам (с 1), 0 - принятых доз нет."""
    accepted = _accepted(patients, dlts, config)
    num_doses = accepted.shape[1]
    last = num_doses - np.argmax(accepted[:, ::-1], axis=1)
    return np.where(accepted.any(axis=1), last, 0)


def run_lockstep(design: RuleDesign,
                 curve: Union[DoseToxicityCurve, Sequence[float]],
                 rng: Union[np.random.Generator, int, None],
                 count: int) -> LockstepBatch:
    """
    Наименование: run_lockstep
    Назначение: count независимых испытаний дизайна на правилах одновременно.
        Переходы совпадают с RuleDesign.decide и core.apply_decision; порядок
        розыгрышей другой, поэтому отдельные испытания не совпадают с run_trial
        при том же зерне, совпадают распределения.
    Входные параметры:
        design (RuleDesign) - дизайн c+c или гибрид.
        curve (DoseToxicityCurve) - истинные вероятности DLT.
        rng (np.random.Generator | int) - генератор или зерно.
        count (int) - число испытаний, >= 1.
    Возвращаемое значение:
        LockstepBatch
    """
    if not isinstance(design, RuleDesign):
        raise ValueError(f"Векторный прогон поддерживает только дизайны на правилах: {design!r}")
    if not isinstance(curve, DoseToxicityCurve):
        curve = DoseToxicityCurve(tuple(curve))
    if curve.num_doses != design.num_doses:
        raise ValueError(f"Длина кривой {curve.num_doses} не совпадает с числом доз "
                         f"дизайна {design.num_doses}")
    if count < 1:
        raise ValueError(f"count: должно быть >= 1, получено {count}")
    rng = np.random.default_rng(rng)

    config = design.config
    num_doses = design.num_doses
    top = num_doses - 1
    probs = np.asarray(curve.probs, dtype=float)
    cohort = config.standard_cohort
    full = config.full_group
    hybrid = config.is_hybrid
    revisit_size = 2 if config.hybrid_revisit is HybridRevisit.BRIDGE else 3
    stop_at_ceiling = config.ceiling_policy is CeilingPolicy.STOP

    patients = np.zeros((count, num_doses), dtype=np.int64)
    dlts = np.zeros((count, num_doses), dtype=np.int64)
    # доза с 0; excluded_from - наименьшая исключённая доза, num_doses - исключённых нет
    dose = np.zeros(count, dtype=np.int64)
    stage = np.full(count, _ACCELERATE if hybrid else _STANDARD, dtype=np.int8)
    pending = np.zeros(count, dtype=np.int64)
    excluded_from = np.full(count, num_doses, dtype=np.int64)
    ceiling = np.zeros(count, dtype=bool)
    mtd = np.zeros(count, dtype=np.int64)

    active = np.arange(count)
    steps = 0
    while active.size and steps < MAX_COHORTS_PER_TRIAL:
        steps += 1
        rows = active
        d = dose[rows]
        here = patients[rows, d]
        accelerate = stage[rows] == _ACCELERATE

        if hybrid:
            size = np.where(here == 1, revisit_size, 3)
            size[accelerate] = 1
        else:
            size = np.full(rows.size, cohort, dtype=np.int64)
        waiting = pending[rows]
        size = np.where(waiting > 0, waiting, size)

        drawn = rng.binomial(size, probs[d])
        here = here + size
        total = dlts[rows, d] + drawn
        patients[rows, d] = here
        dlts[rows, d] = total

        at_top = d == top
        next_dose = d.copy()
        next_pending = np.zeros(rows.size, dtype=np.int64)
        stop = np.zeros(rows.size, dtype=bool)

        if hybrid:
            go = accelerate & (drawn == 0)
            first_dlt = accelerate & (drawn > 0)
            go_top = go & at_top
            next_dose[go & ~at_top] += 1
            ceiling[rows[go_top]] = True
            if stop_at_ceiling:
                stop |= go_top
            else:
                stage[rows[go_top]] = _STANDARD
            next_pending[first_dlt] = 2
            stage[rows[first_dlt]] = _STANDARD
            standard = ~accelerate
        else:
            standard = np.ones(rows.size, dtype=bool)

        n = _standard_counts(here, config)
        first = standard & (n == cohort)
        second = standard & (n == full)
        if np.any(standard & ~first & ~second):
            raise RuntimeError(f"Недостижимая клетка правила {config.label}: "
                               f"n={n[standard & ~first & ~second][0]}")

        unacceptable = (first | second) & (total >= 2)
        go = (first & (total == 0)) | (second & (total <= 1))

        go_top = go & at_top
        ceiling[rows[go_top]] = True
        stop |= go_top & (second | stop_at_ceiling)
        blocked = go & ~at_top & (d + 1 >= excluded_from[rows])
        stop |= blocked & second
        next_dose[go & ~at_top & ~blocked] += 1

        du_rows = rows[unacceptable]
        excluded_from[du_rows] = np.minimum(excluded_from[du_rows], d[unacceptable])
        closed = unacceptable & (d == 0)
        down = unacceptable & (d > 0)
        next_dose[down] -= 1
        landing = np.maximum(d - 1, 0)
        landing_accepted = _accepted(patients[rows, landing], dlts[rows, landing], config)
        stop |= down & landing_accepted

        dose[rows] = next_dose
        pending[rows] = next_pending
        if stop.any():
            stopped = rows[stop]
            mtd[stopped] = select_mtd_rows(patients[stopped], dlts[stopped], config)
        active = rows[~(stop | closed)]

    if active.size:
        raise RuntimeError(f"{active.size} испытаний не завершились за {MAX_COHORTS_PER_TRIAL} когорт")
    logger.debug("run_lockstep: %r, %d испытаний за %d шагов", design, count, steps)
    return LockstepBatch(mtd=mtd, patients=patients, dlts=dlts, ceiling=ceiling)
