# config_loader.py
# Загрузка и сохранение конфигураций запуска (JSON) и сборка объекта дизайна.

import json
import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Tuple, Union

from ..core import DoseFindingDesign, DoseToxicityCurve
from ..rule_designs import HYBRID, HybridRevisit, RuleDesign, RuleDesignConfig
from ..tpi import BetaParams, DecisionMetric, TpiConfig, TpiDesign, WeightConvention

logger = logging.getLogger(__name__)

DESIGN_IDS = ("std33", "d2p2", "d4p4", "hybrid123", "tpi")

DESIGN_ALIASES = {
    "d3p3": "std33",
    "3+3": "std33",
    "2+2": "d2p2",
    "4+4": "d4p4",
    "hybrid": "hybrid123",
    "1+2+3": "hybrid123",
}

RULE_COHORT_SIZES: Dict[str, Union[int, str]] = {
    "std33": 3,
    "d2p2": 2,
    "d4p4": 4,
    "hybrid123": HYBRID,
}

MAX_SEED = 2 ** 64 - 1


class ConfigError(ValueError):
    """Конфигурация не превращается в корректный дизайн; сообщение называет поле."""


def _enum_value(name: str, raw: str, enum_cls) -> str:
    value = str(raw).strip().lower().replace("-", "_")
    allowed = [member.value for member in enum_cls]
    if value not in allowed:
        raise ConfigError(f"{name}: ожидалось одно из {allowed}, получено {raw!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    design: str = "std33"
    cohort_size: Optional[int] = None
    num_doses: Optional[int] = None
    curve: Optional[Tuple[float, ...]] = None
    p_target: float = 0.17
    k1: float = 1.0
    k2: float = 0.1
    xi: float = 0.7
    prior_alpha: float = 0.005
    prior_beta: float = 0.005
    max_patients: int = 30
    metric: str = DecisionMetric.LENGTH_NORMALIZED.value
    weight_convention: str = WeightConvention.VARIANCE.value
    modified_stopping: bool = False
    hybrid_revisit: str = HybridRevisit.BRIDGE.value
    seed: int = 0
    reps: int = 10_000
    workers: int = 1
    output: Optional[str] = None

    def __post_init__(self):
        design = DESIGN_ALIASES.get(str(self.design).lower(), str(self.design).lower())
        if design not in DESIGN_IDS:
            raise ConfigError(f"design: ожидалось одно из {DESIGN_IDS}, получено {self.design!r}")
        object.__setattr__(self, "design", design)

        if self.curve is not None:
            try:
                curve = tuple(float(p) for p in self.curve)
                DoseToxicityCurve(curve)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"curve: {exc}") from None
            object.__setattr__(self, "curve", curve)
            if self.num_doses is not None and self.num_doses != len(curve):
                raise ConfigError(f"num_doses: {self.num_doses} не совпадает с длиной curve {len(curve)}")
        if self.num_doses is not None and self.num_doses < 1:
            raise ConfigError(f"num_doses: должно быть >= 1, получено {self.num_doses}")

        object.__setattr__(self, "metric", _enum_value("metric", self.metric, DecisionMetric))
        object.__setattr__(self, "weight_convention",
                           _enum_value("weight_convention", self.weight_convention, WeightConvention))
        object.__setattr__(self, "hybrid_revisit",
                           _enum_value("hybrid_revisit", self.hybrid_revisit, HybridRevisit))

        if not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed: ожидалось целое в [0, 2^64 - 1], получено {self.seed!r}")
        if self.reps < 1:
            raise ConfigError(f"reps: должно быть >= 1, получено {self.reps}")
        if self.workers < 1:
            raise ConfigError(f"workers: должно быть >= 1, получено {self.workers}")

        if design in RULE_COHORT_SIZES and self.cohort_size is not None \
                and self.cohort_size != RULE_COHORT_SIZES[design]:
            raise ConfigError(f"cohort_size: дизайн {design} использует когорты "
                              f"{RULE_COHORT_SIZES[design]}, получено {self.cohort_size}")

        # параметры TPI проверяются сразу, чтобы ошибка называла поле
        if design == "tpi":
            self.tpi_config()

    @property
    def dose_count(self) -> int:
        if self.num_doses is not None:
            return self.num_doses
        if self.curve is not None:
            return len(self.curve)
        raise ConfigError("num_doses: не задано ни num_doses, ни curve")

    def tpi_config(self) -> TpiConfig:
        try:
            prior = BetaParams(self.prior_alpha, self.prior_beta)
        except ValueError as exc:
            raise ConfigError(f"prior_alpha/prior_beta: {exc}") from None
        try:
            return TpiConfig(
                p_target=self.p_target,
                k1=self.k1,
                k2=self.k2,
                xi=self.xi,
                prior=prior,
                cohort_size=self.cohort_size if self.cohort_size is not None else 3,
                max_patients=self.max_patients,
                decision_metric=DecisionMetric(self.metric),
                weight_convention=WeightConvention(self.weight_convention),
                modified_stopping=self.modified_stopping,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def rule_config(self) -> RuleDesignConfig:
        if self.design not in RULE_COHORT_SIZES:
            raise ConfigError(f"design: {self.design} не является дизайном на правилах")
        return RuleDesignConfig(
            cohort_size=RULE_COHORT_SIZES[self.design],
            num_doses=self.dose_count,
            hybrid_revisit=HybridRevisit(self.hybrid_revisit),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if data["curve"] is not None:
            data["curve"] = list(data["curve"])
        return data


def build_design(config: RunConfig) -> DoseFindingDesign:
    """
    Наименование: build_design
    Назначение: объект дизайна по идентификатору std33 / d2p2 / d4p4 / hybrid123 / tpi.
    Входные параметры:
        config (RunConfig) - конфигурация запуска.
    Возвращаемое значение:
        DoseFindingDesign
    """
    if config.design == "tpi":
        return TpiDesign(config.tpi_config(), config.dose_count)
    return RuleDesign(config.rule_config())


def run_config_from_dict(data: Dict[str, Any],
                         overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Собирает RunConfig из словаря файла; непустые overrides (флаги CLI) имеют приоритет."""
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: неизвестный ключ конфигурации")
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in known:
                raise ConfigError(f"{key}: неизвестный ключ конфигурации")
            merged[key] = value
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: не удалось прочитать {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config: ожидался JSON-объект в {path}")
    logger.debug("конфигурация загружена из %s", path)
    return run_config_from_dict(data, overrides)


def save_run_config(path: str, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)
