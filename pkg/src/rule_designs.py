# rule_designs.py
# Стандартный дизайн 3+3 и его варианты на правилах (2+2, 4+4, гибрид 1+2+3/3+3),
# таблицы мониторинга и стандартное правило выбора МПД.

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd

from .core import (
    ACTION_SEVERITY,
    STAGE_ACCELERATE,
    STAGE_STANDARD,
    Action,
    CeilingPolicy,
    Decision,
    DoseFindingDesign,
    DoseGroupRecord,
    FloorPolicy,
    TrialState,
    new_trial,
)


HYBRID = "hybrid"
SYMMETRIC_COHORT_SIZES = (2, 3, 4)


class UnreachableCellError(ValueError):
    """Клетка (n, t), в которую дизайн попасть не может."""


class HybridRevisit(Enum):
    """Как гибрид добирает дозу, пройденную на ускоренной стадии одним пациентом."""
    BRIDGE = "bridge"        # 1 + 2 + 3 = 6, приёмка при <= 1 DLT
    STANDARD = "standard"    # 1 + 3 (+3), предел 7


@dataclass(frozen=True)
class RuleDesignConfig:
    cohort_size: Union[int, str] = 3
    num_doses: int = 4
    floor_policy: FloorPolicy = FloorPolicy.CLOSE
    ceiling_policy: CeilingPolicy = CeilingPolicy.EXPAND_THEN_STOP
    hybrid_revisit: HybridRevisit = HybridRevisit.BRIDGE

    def __post_init__(self):
        if self.cohort_size != HYBRID and self.cohort_size not in SYMMETRIC_COHORT_SIZES:
            raise ValueError(f"cohort_size: ожидалось 2, 3, 4 или '{HYBRID}', "
                             f"получено {self.cohort_size!r}")
        if self.num_doses < 1:
            raise ValueError(f"num_doses: должно быть >= 1, получено {self.num_doses}")
        if self.ceiling_policy is CeilingPolicy.STAY:
            # остаться на верхней дозе после полной группы правило не умеет
            raise ValueError("ceiling_policy: для дизайнов на правилах допустимы "
                             "expand_then_stop и stop")

    @property
    def is_hybrid(self) -> bool:
        return self.cohort_size == HYBRID

    @property
    def standard_cohort(self) -> int:
        return 3 if self.is_hybrid else int(self.cohort_size)

    @property
    def full_group(self) -> int:
        return 2 * self.standard_cohort

    @property
    def group_cap(self) -> int:
        if self.is_hybrid and self.hybrid_revisit is HybridRevisit.STANDARD:
            return 7
        return self.full_group

    @property
    def label(self) -> str:
        if self.is_hybrid:
            return "1+2+3/3+3"
        return f"{self.cohort_size}+{self.cohort_size}"


# -----------------------------------------------------------------------------
# Правила клеток
# -----------------------------------------------------------------------------
def _check_counts(n: int, t: int) -> None:
    if n < 0 or t < 0 or t > n:
        raise ValueError(f"Недопустимые счётчики n={n}, t={t}")


def symmetric_decision(cohort_size: int, n: int, t: int) -> Action:
    """
    Наименование: symmetric_decision
    Назначение: правило c+c. Первая когорта (n = c): 0 DLT - эскалация,
        1 DLT - вторая когорта, >= 2 - доза недопустима. Полная группа (n = 2c):
        <= 1 DLT - эскалация, иначе доза недопустима.
    Входные параметры:
        cohort_size (int) - размер когорты c из {2, 3, 4}.
        n (int) - пациентов на текущей дозе.
        t (int) - DLT на текущей дозе.
    Возвращаемое значение:
        Action - действие; недостижимая клетка вызывает UnreachableCellError.
    """
    if cohort_size not in SYMMETRIC_COHORT_SIZES:
        raise ValueError(f"Размер когорты должен быть из {SYMMETRIC_COHORT_SIZES}: {cohort_size}")
    _check_counts(n, t)

    if n == cohort_size:
        if t == 0:
            return Action.ESCALATE
        if t == 1:
            return Action.STAY
        return Action.DE_ESCALATE_UNACCEPTABLE

    if n == 2 * cohort_size:
        # вторая когорта набирается только после ровно одного DLT в первой
        if t > cohort_size + 1:
            raise UnreachableCellError(f"Клетка ({n}, {t}) недостижима для когорт по {cohort_size}")
        return Action.ESCALATE if t <= 1 else Action.DE_ESCALATE_UNACCEPTABLE

    raise UnreachableCellError(f"Клетка ({n}, {t}) недостижима для когорт по {cohort_size}")


def std33_decision(n: int, t: int) -> Action:
    return symmetric_decision(3, n, t)


def hybrid123_decision(stage: str, n: int, t: int) -> Decision:
    """Правило гибрида: ускоренная стадия по одному пациенту, затем 3+3 на объединённой группе."""
    _check_counts(n, t)
    if stage == STAGE_ACCELERATE:
        if n != 1:
            raise UnreachableCellError(f"На ускоренной стадии n = 1, получено {n}")
        if t == 0:
            return Decision(Action.ESCALATE)
        # первый DLT: мостовая когорта из двух и переход всего испытания на 3+3
        return Decision(Action.STAY, next_cohort_size=2, stage=STAGE_STANDARD)
    if stage == STAGE_STANDARD:
        return Decision(std33_decision(n, t))
    raise ValueError(f"Unknown stage: {stage}")


def _standard_count(patients: int, config: RuleDesignConfig) -> int:
    """Часть группы, по которой работает правило 3+3 (без пациента ускоренной стадии при пределе 7)."""
    if config.is_hybrid and config.hybrid_revisit is HybridRevisit.STANDARD and patients % 3 == 1:
        return patients - 1
    return patients


def _accepted(group: DoseGroupRecord, config: RuleDesignConfig) -> bool:
    return _standard_count(group.patients, config) == config.full_group and group.dlts <= 1


def select_mtd_standard(state: TrialState,
                        cohort_size: Union[int, str, RuleDesignConfig] = 3) -> Optional[int]:
    """
    Наименование: select_mtd_standard
    Назначение: наибольшая доза с полной группой (2c пациентов) и не более чем одним DLT.
    Входные параметры:
        state (TrialState) - состояние испытания.
        cohort_size - размер когорты, маркер гибрида или готовая конфигурация.
    Возвращаемое значение:
        Optional[int] - МПД или None.
    """
    if isinstance(cohort_size, RuleDesignConfig):
        config = cohort_size
    else:
        config = RuleDesignConfig(cohort_size=cohort_size, num_doses=max(state.num_doses, 1))
    selected = None
    for dose, group in enumerate(state.groups, start=1):
        if _accepted(group, config):
            selected = dose
    return selected


# -----------------------------------------------------------------------------
# Таблица мониторинга
# -----------------------------------------------------------------------------
@dataclass
class MonitoringTable:
    """Отображение (пациентов, DLT) на текущей дозе -> действие по достижимым клеткам."""
    cells: Dict[Tuple[int, int], Action] = field(default_factory=dict)
    title: str = ""

    def action(self, n: int, t: int) -> Action:
        try:
            return self.cells[(n, t)]
        except KeyError:
            raise UnreachableCellError(f"Клетки ({n}, {t}) нет в таблице") from None

    @property
    def columns(self) -> List[int]:
        return sorted({n for n, _ in self.cells})

    @property
    def max_dlts(self) -> int:
        return max((t for _, t in self.cells), default=0)

    def is_column_monotone(self) -> bool:
        for n in self.columns:
            severities = [ACTION_SEVERITY[self.cells[(n, t)]]
                          for t in range(0, n + 1) if (n, t) in self.cells]
            if any(a > b for a, b in zip(severities, severities[1:])):
                return False
        return True

    def differences(self, other: "MonitoringTable") -> List[Tuple[int, int]]:
        """Клетки, в которых таблицы расходятся (в том числе отсутствующие в одной из них)."""
        keys = sorted(set(self.cells) | set(other.cells))
        return [key for key in keys if self.cells.get(key) != other.cells.get(key)]

    def to_frame(self) -> pd.DataFrame:
        """Строки - число DLT, столбцы - число пациентов; недостижимые клетки пустые."""
        rows = []
        for t in range(self.max_dlts + 1):
            row = {"dlts": t}
            for n in self.columns:
                action = self.cells.get((n, t))
                row[f"n{n}"] = action.value if action is not None else ""
            rows.append(row)
        return pd.DataFrame(rows, columns=["dlts"] + [f"n{n}" for n in self.columns])


# Таблица 3+3 в альтернативной записи (строки - DLT, столбцы - 3 и 6 пациентов)
STANDARD_TABLE_CELLS: Dict[Tuple[int, int], Action] = {
    (3, 0): Action.ESCALATE,
    (3, 1): Action.STAY,
    (3, 2): Action.DE_ESCALATE_UNACCEPTABLE,
    (3, 3): Action.DE_ESCALATE_UNACCEPTABLE,
    (6, 0): Action.ESCALATE,
    (6, 1): Action.ESCALATE,
    (6, 2): Action.DE_ESCALATE_UNACCEPTABLE,
    (6, 3): Action.DE_ESCALATE_UNACCEPTABLE,
    (6, 4): Action.DE_ESCALATE_UNACCEPTABLE,
}


def monitoring_table(config: RuleDesignConfig) -> MonitoringTable:
    cells: Dict[Tuple[int, int], Action] = {}
    if config.is_hybrid:
        for t in range(2):
            cells[(1, t)] = hybrid123_decision(STAGE_ACCELERATE, 1, t).action
        for t in range(4):
            cells[(3, t)] = std33_decision(3, t)
        for t in range(5):
            cells[(6, t)] = std33_decision(6, t)
    else:
        c = int(config.cohort_size)
        for t in range(c + 1):
            cells[(c, t)] = symmetric_decision(c, c, t)
        for t in range(c + 2):
            cells[(2 * c, t)] = symmetric_decision(c, 2 * c, t)
    return MonitoringTable(cells, title=config.label)


# -----------------------------------------------------------------------------
# Дизайн для автомата испытания
# -----------------------------------------------------------------------------
class RuleDesign(DoseFindingDesign):
    """
    Дизайн c+c или гибрид поверх core.
    Правила клеток дополняются решениями уровня испытания: остановка при
    деэскалации на уже принятую дозу, потолок лестницы и запрет эскалации
    в исключённую дозу.
    """

    def __init__(self, config: RuleDesignConfig):
        self.config = config
        self.num_doses = config.num_doses
        self.floor_policy = config.floor_policy

    def __repr__(self) -> str:
        return f"RuleDesign({self.config.label}, D={self.num_doses})"

    def initial_state(self) -> TrialState:
        stage = STAGE_ACCELERATE if self.config.is_hybrid else STAGE_STANDARD
        return new_trial(self.num_doses, stage=stage)

    def cohort_size(self, state: TrialState) -> int:
        if state.pending_cohort_size is not None:
            return state.pending_cohort_size
        if not self.config.is_hybrid:
            return int(self.config.cohort_size)
        if state.stage == STAGE_ACCELERATE:
            return 1
        if state.group(state.current_dose).patients == 1:
            return 2 if self.config.hybrid_revisit is HybridRevisit.BRIDGE else 3
        return 3

    def decide(self, state: TrialState) -> Decision:
        config = self.config
        dose = state.current_dose
        group = state.group(dose)
        at_top = dose == self.num_doses

        if config.is_hybrid and state.stage == STAGE_ACCELERATE:
            decision = hybrid123_decision(STAGE_ACCELERATE, group.patients, group.dlts)
            if decision.action is Action.ESCALATE and at_top:
                if config.ceiling_policy is CeilingPolicy.STOP:
                    return Decision(Action.STOP, ceiling=True)
                # верхняя доза пройдена одним пациентом: добор до полной группы
                return Decision(Action.STAY, stage=STAGE_STANDARD, ceiling=True)
            return decision

        n = _standard_count(group.patients, config)
        action = symmetric_decision(config.standard_cohort, n, group.dlts)

        if action is Action.DE_ESCALATE_UNACCEPTABLE:
            landing = dose - 1
            stop_after = landing >= 1 and _accepted(state.group(landing), config)
            return Decision(action, stop_after=stop_after)

        if action is Action.STAY:
            return Decision(action)

        full = n == config.full_group
        if at_top:
            if config.ceiling_policy is CeilingPolicy.STOP:
                return Decision(Action.STOP, ceiling=True)
            return Decision(Action.STOP if full else Action.STAY, ceiling=True)
        if dose + 1 in state.excluded:
            return Decision(Action.STOP if full else Action.STAY)
        return Decision(Action.ESCALATE)

    def select_mtd(self, state: TrialState) -> Optional[int]:
        return select_mtd_standard(state, self.config)
