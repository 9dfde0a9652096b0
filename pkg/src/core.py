# core.py
# Доменные типы и общий конечный автомат последовательного испытания фазы I.
# Любой дизайн (3+3 и его варианты, TPI) подключается через DoseFindingDesign:
# дизайн выбирает размер когорты, решение после когорты и итоговую МПД,
# а переходы состояния и политики на границах лестницы доз живут здесь.

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

# Предохранитель от бесконечного цикла при ошибке в дизайне
MAX_COHORTS_PER_TRIAL = 10_000

STAGE_STANDARD = "standard"
STAGE_ACCELERATE = "accelerate"


class TrialStateError(ValueError):
    """Недопустимая операция над состоянием испытания."""


# -----------------------------------------------------------------------------
# Перечисления
# -----------------------------------------------------------------------------
class Action(Enum):
    """Алфавит решений: E, S, D, DU и остановка."""
    ESCALATE = "E"
    STAY = "S"
    DE_ESCALATE = "D"
    DE_ESCALATE_UNACCEPTABLE = "DU"
    STOP = "STOP"

    def __str__(self) -> str:
        return self.value


# Порядок "осторожности" действий: чем больше, тем дальше от эскалации
ACTION_SEVERITY = {
    Action.ESCALATE: 0,
    Action.STAY: 1,
    Action.DE_ESCALATE: 2,
    Action.DE_ESCALATE_UNACCEPTABLE: 3,
    Action.STOP: 4,
}


class TrialStatus(Enum):
    ACTIVE = "active"
    STOPPED_WITH_MTD = "stopped_with_mtd"
    STOPPED_NO_MTD = "stopped_no_mtd"


class FloorPolicy(Enum):
    """Что делать, когда деэскалация требуется ниже дозы 1."""
    CLOSE = "close"
    STAY = "stay"


class CeilingPolicy(Enum):
    """Что делать, когда эскалация требуется выше последней дозы."""
    EXPAND_THEN_STOP = "expand_then_stop"
    STAY = "stay"
    STOP = "stop"


# -----------------------------------------------------------------------------
# Доменные типы
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class DoseToxicityCurve:
    """Истинные вероятности DLT по уровням доз (индексы доз с 1)."""
    probs: Tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if not probs:
            raise ValueError("Кривая доза-токсичность должна содержать хотя бы одну дозу")
        for i, p in enumerate(probs, start=1):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"Вероятность DLT для дозы {i} вне [0, 1]: {p}")
        object.__setattr__(self, "probs", probs)

    @property
    def num_doses(self) -> int:
        return len(self.probs)

    def prob(self, dose: int) -> float:
        return self.probs[dose - 1]

    def is_monotone(self) -> bool:
        return all(a <= b for a, b in zip(self.probs, self.probs[1:]))

    def require_monotone(self) -> "DoseToxicityCurve":
        if not self.is_monotone():
            raise ValueError(f"Кривая не монотонна: {self.probs}")
        return self


@dataclass(frozen=True)
class DoseGroupRecord:
    """Все пациенты на одной дозе: n_i и t_i."""
    patients: int = 0
    dlts: int = 0

    def __post_init__(self):
        if self.patients < 0 or self.dlts < 0:
            raise TrialStateError(f"Отрицательные счётчики: {self.patients}/{self.dlts}")
        if self.dlts > self.patients:
            raise TrialStateError(f"DLT больше, чем пациентов: {self.dlts} > {self.patients}")

    @property
    def rate(self) -> float:
        return self.dlts / self.patients if self.patients else float("nan")

    def add(self, size: int, dlts: int) -> "DoseGroupRecord":
        return DoseGroupRecord(self.patients + size, self.dlts + dlts)


@dataclass(frozen=True)
class CohortRecord:
    dose: int
    size: int
    dlts: int


@dataclass(frozen=True)
class TrialState:
    """
    Запись конечного автомата испытания.
    stage и pending_cohort_size нужны дизайнам с переменным размером когорт (1+2+3/3+3),
    ceiling_reached отмечает срабатывание политики верхней границы.
    """
    groups: Tuple[DoseGroupRecord, ...]
    current_dose: int = 1
    excluded: FrozenSet[int] = frozenset()
    status: TrialStatus = TrialStatus.ACTIVE
    mtd: Optional[int] = None
    stage: str = STAGE_STANDARD
    pending_cohort_size: Optional[int] = None
    ceiling_reached: bool = False
    cohort_log: Tuple[CohortRecord, ...] = ()

    @property
    def num_doses(self) -> int:
        return len(self.groups)

    @property
    def is_active(self) -> bool:
        return self.status is TrialStatus.ACTIVE

    @property
    def total_patients(self) -> int:
        return sum(g.patients for g in self.groups)

    @property
    def total_dlts(self) -> int:
        return sum(g.dlts for g in self.groups)

    def group(self, dose: int) -> DoseGroupRecord:
        return self.groups[dose - 1]

    def visited_doses(self) -> List[int]:
        return [i for i, g in enumerate(self.groups, start=1) if g.patients > 0]

    def merge_key(self) -> tuple:
        """Ключ состояния без журнала когорт (для слияния путей при переборе)."""
        return (self.groups, self.current_dose, self.excluded, self.status, self.mtd,
                self.stage, self.pending_cohort_size, self.ceiling_reached)


@dataclass(frozen=True)
class Decision:
    """
    Решение дизайна после очередной когорты.
    stop_after: после действия испытание завершается (например, DU на дозу,
    которая уже прошла полную группу).
    """
    action: Action
    stop_after: bool = False
    next_cohort_size: Optional[int] = None
    stage: Optional[str] = None
    ceiling: bool = False


@dataclass(frozen=True)
class TrialOutcome:
    mtd: Optional[int]
    groups: Tuple[DoseGroupRecord, ...]
    cohort_log: Tuple[CohortRecord, ...]
    status: TrialStatus
    excluded: FrozenSet[int] = frozenset()
    mtd_at_boundary: bool = False
    ceiling_reached: bool = False

    @property
    def total_patients(self) -> int:
        return sum(g.patients for g in self.groups)

    @property
    def total_dlts(self) -> int:
        return sum(g.dlts for g in self.groups)

    @property
    def num_doses(self) -> int:
        return len(self.groups)


class DoseFindingDesign(ABC):
    """Базовый класс дизайна, подключаемого к автомату испытания."""

    num_doses: int
    floor_policy: FloorPolicy = FloorPolicy.CLOSE

    def initial_state(self) -> TrialState:
        return new_trial(self.num_doses)

    @abstractmethod
    def cohort_size(self, state: TrialState) -> int:
        """Размер следующей когорты на текущей дозе."""

    @abstractmethod
    def decide(self, state: TrialState) -> Decision:
        """Решение после записи очередной когорты."""

    @abstractmethod
    def select_mtd(self, state: TrialState) -> Optional[int]:
        """Итоговая оценка МПД по состоянию в момент остановки."""


# -----------------------------------------------------------------------------
# Операции над состоянием
# -----------------------------------------------------------------------------
def new_trial(num_doses: int, stage: str = STAGE_STANDARD) -> TrialState:
    """
    Наименование: new_trial
    Назначение: начальное состояние испытания, лечение начинается с дозы 1.
    Входные параметры:
        num_doses (int) - число уровней доз D >= 1.
        stage (str) - стартовая стадия дизайна.
    Возвращаемое значение:
        TrialState - активное состояние с нулевыми счётчиками.
    """
    if num_doses < 1:
        raise TrialStateError(f"Число доз должно быть >= 1, получено {num_doses}")
    return TrialState(groups=(DoseGroupRecord(),) * num_doses, stage=stage)


def record_cohort(state: TrialState, dose: int, size: int, dlts: int) -> TrialState:
    """Записывает когорту на текущей дозе. Статус не меняется."""
    if not state.is_active:
        raise TrialStateError("Испытание уже завершено")
    if dose != state.current_dose:
        raise TrialStateError(f"Когорта на дозе {dose}, текущая доза {state.current_dose}")
    if size < 1:
        raise TrialStateError(f"Размер когорты должен быть положительным: {size}")
    if dlts < 0 or dlts > size:
        raise TrialStateError(f"Число DLT {dlts} вне [0, {size}]")

    groups = list(state.groups)
    groups[dose - 1] = groups[dose - 1].add(size, dlts)
    return replace(state, groups=tuple(groups),
                   cohort_log=state.cohort_log + (CohortRecord(dose, size, dlts),))


def apply_action(state: TrialState,
                 action: Action,
                 mtd: Optional[int] = None,
                 floor_policy: FloorPolicy = FloorPolicy.CLOSE) -> TrialState:
    """
    Наименование: apply_action
    Назначение: переход автомата по действию.
    Входные параметры:
        state (TrialState) - активное состояние.
        action (Action) - E/S/D/DU/STOP.
        mtd (Optional[int]) - выбранная МПД, используется только при STOP.
        floor_policy (FloorPolicy) - поведение при D на дозе 1.
    Возвращаемое значение:
        TrialState - новое состояние. Выход за границы лестницы доз
        разрешается в терминальный статус, а не в ошибку.
    """
    if not state.is_active:
        raise TrialStateError("Испытание уже завершено")

    dose = state.current_dose
    top = state.num_doses

    if action is Action.STAY:
        return state

    if action is Action.ESCALATE:
        if dose == top:
            # дизайн не разрешил потолок сам: верхняя доза объявляется МПД
            return replace(state, status=TrialStatus.STOPPED_WITH_MTD,
                           mtd=mtd if mtd is not None else top, ceiling_reached=True)
        if dose + 1 in state.excluded:
            raise TrialStateError(f"Эскалация на исключённую дозу {dose + 1}")
        return replace(state, current_dose=dose + 1)

    if action is Action.DE_ESCALATE:
        if dose > 1:
            return replace(state, current_dose=dose - 1)
        if floor_policy is FloorPolicy.STAY:
            return state
        return replace(state, status=TrialStatus.STOPPED_NO_MTD, mtd=None)

    if action is Action.DE_ESCALATE_UNACCEPTABLE:
        # доза и все более высокие признаются недопустимо токсичными
        excluded = state.excluded | frozenset(range(dose, top + 1))
        if dose == 1:
            return replace(state, excluded=excluded,
                           status=TrialStatus.STOPPED_NO_MTD, mtd=None)
        return replace(state, excluded=excluded, current_dose=dose - 1)

    if action is Action.STOP:
        status = TrialStatus.STOPPED_WITH_MTD if mtd is not None else TrialStatus.STOPPED_NO_MTD
        return replace(state, status=status, mtd=mtd)

    raise TrialStateError(f"Неизвестное действие: {action}")


def apply_decision(design: DoseFindingDesign, state: TrialState, decision: Decision) -> TrialState:
    """Применяет решение дизайна: стадия, размер следующей когорты, действие, остановка."""
    state = replace(state,
                    stage=decision.stage or state.stage,
                    pending_cohort_size=decision.next_cohort_size,
                    ceiling_reached=state.ceiling_reached or decision.ceiling)

    if decision.action is Action.STOP:
        return apply_action(state, Action.STOP, mtd=design.select_mtd(state))

    state = apply_action(state, decision.action, floor_policy=design.floor_policy)
    if decision.stop_after and state.is_active:
        state = apply_action(state, Action.STOP, mtd=design.select_mtd(state))
    return state


def advance(design: DoseFindingDesign, state: TrialState, dlts: int,
            size: Optional[int] = None) -> TrialState:
    """Один шаг испытания: когорта на текущей дозе, решение, переход."""
    if size is None:
        size = design.cohort_size(state)
    state = record_cohort(state, state.current_dose, size, dlts)
    decision = design.decide(state)
    logger.debug("доза %d: %d/%d -> %s", state.current_dose,
                 state.group(state.current_dose).dlts,
                 state.group(state.current_dose).patients, decision.action)
    return apply_decision(design, state, decision)


def to_outcome(design: DoseFindingDesign, state: TrialState) -> TrialOutcome:
    if state.is_active:
        raise TrialStateError("Итог доступен только для завершённого испытания")
    return TrialOutcome(
        mtd=state.mtd,
        groups=state.groups,
        cohort_log=state.cohort_log,
        status=state.status,
        excluded=state.excluded,
        mtd_at_boundary=state.ceiling_reached and state.mtd == design.num_doses,
        ceiling_reached=state.ceiling_reached,
    )


def run_trial(design: DoseFindingDesign,
              curve: Union[DoseToxicityCurve, Sequence[float]],
              rng: Union[np.random.Generator, int, None] = None) -> TrialOutcome:
    """
    Наименование: run_trial
    Назначение: прогон дизайна против истинной кривой. Число DLT в когорте
    разыгрывается биномиально с размером когорты и p_i.
    Входные параметры:
        design (DoseFindingDesign) - дизайн.
        curve (DoseToxicityCurve) - истинные вероятности DLT.
        rng (np.random.Generator | int) - генератор или зерно.
    Возвращаемое значение:
        TrialOutcome - детерминирован при фиксированном зерне.
    """
    if not isinstance(curve, DoseToxicityCurve):
        curve = DoseToxicityCurve(tuple(curve))
    if curve.num_doses != design.num_doses:
        raise ValueError(f"Длина кривой {curve.num_doses} не совпадает с числом доз "
                         f"дизайна {design.num_doses}")
    rng = np.random.default_rng(rng)

    state = design.initial_state()
    for _ in range(MAX_COHORTS_PER_TRIAL):
        if not state.is_active:
            return to_outcome(design, state)
        size = design.cohort_size(state)
        dlts = int(rng.binomial(size, curve.prob(state.current_dose)))
        state = advance(design, state, dlts, size)
    if not state.is_active:
        return to_outcome(design, state)
    raise RuntimeError(f"Испытание не завершилось за {MAX_COHORTS_PER_TRIAL} когорт")


def replay_trial(design: DoseFindingDesign, cohort_log: Iterable[CohortRecord]) -> TrialOutcome:
    """Повторно проводит испытание по записанному журналу когорт."""
    state = design.initial_state()
    for record in cohort_log:
        if not state.is_active:
            raise TrialStateError("Журнал содержит когорты после остановки испытания")
        expected = design.cohort_size(state)
        if record.dose != state.current_dose or record.size != expected:
            raise TrialStateError(
                f"Журнал расходится с дизайном: ожидалась когорта {expected} на дозе "
                f"{state.current_dose}, записано {record.size} на дозе {record.dose}")
        state = advance(design, state, record.dlts, record.size)
    if state.is_active:
        raise TrialStateError("Журнал закончился до остановки испытания")
    return to_outcome(design, state)


def check_invariants(state: TrialState) -> None:
    """Проверяет инварианты состояния, бросает TrialStateError при нарушении."""
    top = state.num_doses
    for dose in state.excluded:
        if not 1 <= dose <= top:
            raise TrialStateError(f"Исключённая доза {dose} вне 1..{top}")
        if any(k not in state.excluded for k in range(dose, top + 1)):
            raise TrialStateError(f"Исключение не замкнуто вверх от дозы {dose}")
    if state.is_active:
        if not 1 <= state.current_dose <= top:
            raise TrialStateError(f"Текущая доза {state.current_dose} вне 1..{top}")
        if state.current_dose in state.excluded:
            raise TrialStateError(f"Текущая доза {state.current_dose} исключена")

    patients = [0] * top
    dlts = [0] * top
    for record in state.cohort_log:
        patients[record.dose - 1] += record.size
        dlts[record.dose - 1] += record.dlts
    if [g.patients for g in state.groups] != patients or [g.dlts for g in state.groups] != dlts:
        raise TrialStateError("Журнал когорт не сходится со счётчиками групп")
