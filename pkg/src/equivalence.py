# equivalence.py
# Проверки эквивалентности:
#   таблица TPI против таблицы 3+3 (по клеткам, под обеими метриками, с проверкой устойчивости);
#   одинаковое назначение пациентов 3+3 и TPI с правилом остановки 1 из 6 на всех путях;
#   совпадение изотонической оценки МПД со стандартной на всех путях 3+3.

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .core import DoseToxicityCurve, TrialOutcome, TrialState
from .isotonic import empirical_rates, mtd_largest_below, pava
from .rule_designs import (
    STANDARD_TABLE_CELLS,
    MonitoringTable,
    RuleDesign,
    RuleDesignConfig,
    select_mtd_standard,
)
from .sim import enumerate_paths
from .tpi import DecisionMetric, TpiConfig, TpiDesign, tpi_monitoring_table, tpi_select_mtd

logger = logging.getLogger(__name__)

# Окрестность параметров, на которой таблица TPI обязана совпадать с таблицей 3+3
STABILITY_P_TARGETS = (0.166, 0.175, 0.18)
STABILITY_XI = (0.695, 0.71, 0.72)

# Точки, где таблица меняется; печатаются как диагностика
BOUNDARY_P_TARGETS = (0.16,)
BOUNDARY_XI = (0.69,)

ISOTONIC_P_TARGETS = (1 / 6, 0.20, 0.25, 0.30, 1 / 3 - 1e-9)

# Все ветви путей должны иметь положительную вероятность
ENUMERATION_PROB = 0.5

PROBABILITY_TOL = 1e-12


@dataclass
class HarnessResult:
    name: str
    passed: bool = True
    details: List[str] = field(default_factory=list)
    first_failure: Optional[str] = None

    def fail(self, message: str) -> None:
        if self.first_failure is None:
            self.first_failure = message
        self.passed = False
        self.details.append(message)


def _describe_differences(table: MonitoringTable, reference: MonitoringTable,
                          cells: Sequence[Tuple[int, int]]) -> List[str]:
    out = []
    for n, t in cells:
        got = table.cells.get((n, t))
        want = reference.cells.get((n, t))
        out.append(f"клетка ({n},{t}): ожидалось {want}, получено {got}")
    return out


def check_monitoring_table(metric: DecisionMetric = DecisionMetric.LENGTH_NORMALIZED,
                           base: Optional[TpiConfig] = None) -> HarnessResult:
    """
    Наименование: check_monitoring_table
    Назначение: таблица TPI по группам 3 и 6 против таблицы 3+3 по клеткам.
        Расхождения печатаются для обеих метрик; на результат влияет только
        выбранная метрика и устойчивость в окрестности параметров.
    Входные параметры:
        metric (DecisionMetric) - метрика решения.
        base (Optional[TpiConfig]) - базовые параметры (по умолчанию стандартный набор).
    Возвращаемое значение:
        HarnessResult
    """
    base = base or TpiConfig()
    reference = MonitoringTable(dict(STANDARD_TABLE_CELLS), title="3+3")
    result = HarnessResult("monitoring_table")

    for candidate in DecisionMetric:
        table = tpi_monitoring_table(replace(base, decision_metric=candidate), (3, 6))
        diffs = table.differences(reference)
        label = candidate.value
        if not diffs:
            result.details.append(f"{label}: совпадает во всех клетках")
        elif candidate is metric:
            for message in _describe_differences(table, reference, diffs):
                result.fail(f"{label}: {message}")
        else:
            cells = ", ".join(f"({n},{t})" for n, t in diffs)
            result.details.append(f"{label}: расхождения в клетках {cells}")

    configured = replace(base, decision_metric=metric)
    points = [replace(configured, p_target=p) for p in STABILITY_P_TARGETS]
    points += [replace(configured, xi=xi) for xi in STABILITY_XI]
    for point in points:
        table = tpi_monitoring_table(point, (3, 6))
        diffs = table.differences(reference)
        if diffs:
            for message in _describe_differences(table, reference, diffs):
                result.fail(f"устойчивость p_T={point.p_target}, xi={point.xi}: {message}")
    if result.passed:
        result.details.append(f"устойчивость: {len(points)} точек окрестности без изменений")

    boundary = [replace(configured, p_target=p) for p in BOUNDARY_P_TARGETS]
    boundary += [replace(configured, xi=xi) for xi in BOUNDARY_XI]
    for point in boundary:
        table = tpi_monitoring_table(point, (3, 6))
        diffs = table.differences(reference)
        if diffs:
            flips = ", ".join(f"({n},{t})->{table.cells.get((n, t), '-')}" for n, t in diffs)
            result.details.append(f"граница: p_T={point.p_target}, xi={point.xi} меняет {flips}")
    return result


def _rule_design(num_doses: int) -> RuleDesign:
    return RuleDesign(RuleDesignConfig(cohort_size=3, num_doses=num_doses))


def _modified_tpi(num_doses: int, metric: DecisionMetric, base: Optional[TpiConfig]) -> TpiDesign:
    config = replace(base or TpiConfig(), decision_metric=metric, modified_stopping=True)
    return TpiDesign(config, num_doses)


def check_identical_assignment(metric: DecisionMetric = DecisionMetric.LENGTH_NORMALIZED,
                               max_doses: int = 4,
                               base: Optional[TpiConfig] = None) -> HarnessResult:
    """Все пути 3+3 и TPI с правилом 1 из 6: одинаковые журналы когорт и одинаковые МПД."""
    result = HarnessResult("identical_assignment")
    for num_doses in range(1, max_doses + 1):
        curve = DoseToxicityCurve((ENUMERATION_PROB,) * num_doses)
        rule = _rule_design(num_doses)
        tpi = _modified_tpi(num_doses, metric, base)
        rule_paths = enumerate_paths(rule, curve, merge_states=False)
        tpi_paths = enumerate_paths(tpi, curve, merge_states=False)

        rule_by_log: Dict[tuple, Tuple[Optional[int], float]] = {
            outcome.cohort_log: (outcome.mtd, prob) for outcome, prob in rule_paths.paths}
        tpi_by_log: Dict[tuple, Tuple[Optional[int], float]] = {
            outcome.cohort_log: (outcome.mtd, prob) for outcome, prob in tpi_paths.paths}

        for log in sorted(set(rule_by_log) ^ set(tpi_by_log), key=len):
            owner = "3+3" if log in rule_by_log else "TPI"
            steps = " ".join(f"{r.dose}:{r.dlts}/{r.size}" for r in log)
            result.fail(f"D={num_doses}: путь только у {owner}: {steps}")
            break

        for log, (mtd, _) in rule_by_log.items():
            if log in tpi_by_log and tpi_by_log[log][0] != mtd:
                steps = " ".join(f"{r.dose}:{r.dlts}/{r.size}" for r in log)
                result.fail(f"D={num_doses}: МПД {mtd} (3+3) и {tpi_by_log[log][0]} (TPI) на пути {steps}")
                break

        # оценка TPI на терминальных состояниях 3+3
        tpi_config = tpi.config
        for outcome, _ in rule_paths.paths:
            state = _state_of(outcome)
            if tpi_select_mtd(state, tpi_config) != select_mtd_standard(state, 3):
                result.fail(f"D={num_doses}: tpi_select_mtd расходится со стандартной МПД "
                            f"для групп {[(g.patients, g.dlts) for g in outcome.groups]}")
                break

        result.details.append(f"D={num_doses}: путей 3+3 {len(rule_paths.paths)}, "
                              f"TPI {len(tpi_paths.paths)}")
    return result


def _state_of(outcome: TrialOutcome) -> TrialState:
    return TrialState(groups=outcome.groups, current_dose=1, excluded=outcome.excluded,
                      status=outcome.status, mtd=outcome.mtd, cohort_log=outcome.cohort_log)


def check_isotonic_equivalence(max_doses: int = 4,
                               p_targets: Sequence[float] = ISOTONIC_P_TARGETS) -> HarnessResult:
    """Наибольшая доза с изотонической оценкой <= p_T совпадает со стандартной МПД на всех путях 3+3."""
    result = HarnessResult("isotonic_equivalence")
    for num_doses in range(1, max_doses + 1):
        curve = DoseToxicityCurve((ENUMERATION_PROB,) * num_doses)
        enumeration = enumerate_paths(_rule_design(num_doses), curve)
        total = enumeration.total_probability
        if abs(total - 1.0) > PROBABILITY_TOL or enumeration.unfinished_probability > 0:
            result.fail(f"D={num_doses}: сумма вероятностей путей {total!r}")

        for outcome, _ in enumeration.paths:
            state = _state_of(outcome)
            rates = empirical_rates(state)
            fit = pava(rates.values, rates.weights)
            expected = select_mtd_standard(state, 3)
            for p_target in p_targets:
                got = mtd_largest_below(fit, p_target, rates.doses)
                if got != expected:
                    result.fail(f"D={num_doses}, p_T={p_target:.6g}: изотоническая МПД {got}, "
                                f"стандартная {expected}, группы "
                                f"{[(g.patients, g.dlts) for g in outcome.groups]}")
                    break
        result.details.append(f"D={num_doses}: {len(enumeration.paths)} терминальных состояний, "
                              f"сумма вероятностей {total:.15f}")
    return result


def run_equivalence(metric: DecisionMetric = DecisionMetric.LENGTH_NORMALIZED,
                    isotonic_only: bool = False,
                    max_doses: int = 4) -> List[HarnessResult]:
    if isotonic_only:
        return [check_isotonic_equivalence(max_doses)]

    table = check_monitoring_table(metric)
    if table.passed:
        assignment = check_identical_assignment(metric, max_doses)
    else:
        # при расходящейся таблице дерево путей TPI не ограничено 2D когортами
        assignment = HarnessResult("identical_assignment")
        assignment.fail("пропущено: таблица TPI расходится с таблицей 3+3")
    results = [table, assignment, check_isotonic_equivalence(max_doses)]
    for result in results:
        logger.info("%s: %s", result.name, "OK" if result.passed else result.first_failure)
    return results
