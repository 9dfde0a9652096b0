# cli.py
# Командная строка: таблицы мониторинга, кривые наихудшего случая, симуляция,
# проверки эквивалентности и изотоническая оценка по счётчикам.
# Коды выхода: 0 - успех, 2 - ошибка аргументов, 3 - проверка не пройдена.

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .core import DoseToxicityCurve
from .equivalence import run_equivalence
from .isotonic import mtd_closest, mtd_largest_below, pava
from .model import DoseFindingModel
from .rule_designs import MonitoringTable, RuleDesignConfig, monitoring_table
from .sim import DEFAULT_THRESHOLDS, ENGINE_TRIAL, ENGINES, simulate
from .tpi import DecisionMetric, tpi_monitoring_table
from .utils.config_loader import (
    RULE_COHORT_SIZES,
    ConfigError,
    RunConfig,
    build_design,
    load_run_config,
    run_config_from_dict,
)
from .worstcase import (
    DESIGNS,
    WorstCaseQuery,
    binomial_standard_error,
    curve_grid,
    parse_grid,
    plot_worst_case_curves,
    r_closed_form,
    r_monte_carlo,
    verify_grid,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3

CSV_FLOAT_FORMAT = "%.12g"

ANSI_COLORS = {"E": "\033[32m", "S": "\033[33m", "D": "\033[35m", "DU": "\033[31m"}
ANSI_RESET = "\033[0m"


# -----------------------------------------------------------------------------
# Разбор аргументов
# -----------------------------------------------------------------------------
def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидался список чисел через запятую: {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидался список целых через запятую: {text!r}") from None


def _prior(text: str) -> Tuple[float, float]:
    values = _floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"--prior задаётся как alpha,beta: {text!r}")
    return values[0], values[1]


def _parse_counts(text: str) -> List[Tuple[int, int]]:
    """'t/n,t/n,...' -> [(t, n), ...]; 0/0 означает непосещённую дозу."""
    pairs = []
    for part in text.split(","):
        try:
            t_text, n_text = part.strip().split("/")
            t, n = int(t_text), int(n_text)
        except ValueError:
            raise ValueError(f"--counts: пара {part!r} не в формате t/n") from None
        if n < 0 or t < 0 or t > n:
            raise ValueError(f"--counts: недопустимая пара {part!r}")
        pairs.append((t, n))
    return pairs


def _add_design_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON-файл конфигурации; флаги имеют приоритет")
    parser.add_argument("--design", help="std33, d2p2, d4p4, hybrid123 или tpi")
    parser.add_argument("--cohort-size", type=int)
    parser.add_argument("--p-target", type=float)
    parser.add_argument("--k1", type=float)
    parser.add_argument("--k2", type=float)
    parser.add_argument("--xi", type=float)
    parser.add_argument("--prior", type=_prior, help="alpha,beta априорного бета-распределения")
    parser.add_argument("--metric", help="length-normalized или raw-mass")
    parser.add_argument("--weight-convention", help="variance или inverse-variance")
    parser.add_argument("--max-patients", type=int)
    parser.add_argument("--modified-stopping", action="store_true", default=None,
                        help="остановка при 1 DLT из 6 и исключённой следующей дозе")
    parser.add_argument("--hybrid-revisit", help="bridge или standard")


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = {
        "design": args.design,
        "cohort_size": args.cohort_size,
        "p_target": args.p_target,
        "k1": args.k1,
        "k2": args.k2,
        "xi": args.xi,
        "metric": args.metric,
        "weight_convention": args.weight_convention,
        "max_patients": args.max_patients,
        "modified_stopping": args.modified_stopping,
        "hybrid_revisit": args.hybrid_revisit,
    }
    if args.prior is not None:
        overrides["prior_alpha"], overrides["prior_beta"] = args.prior
    for name in ("curve", "seed", "reps", "workers", "num_doses"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = tuple(value) if name == "curve" else value
    if args.config:
        return load_run_config(args.config, overrides)
    return run_config_from_dict({}, overrides)


def _use_color(stream) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _render_table(table: MonitoringTable, color: bool) -> str:
    frame = table.to_frame()
    columns = list(frame.columns)
    width = max(4, *(len(c) for c in columns))
    lines = ["".join(f"{c:>{width}}" for c in columns)]
    for _, row in frame.iterrows():
        cells = []
        for column in columns:
            value = str(row[column])
            cell = f"{value:>{width}}"
            if color and value in ANSI_COLORS:
                cell = cell.replace(value, f"{ANSI_COLORS[value]}{value}{ANSI_RESET}")
            cells.append(cell)
        lines.append("".join(cells))
    return "\n".join(lines)


def _emit_csv(frame: pd.DataFrame, output: Optional[str]) -> None:
    text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    if output:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text)
    print(text, end="")


# -----------------------------------------------------------------------------
# Подкоманды
# -----------------------------------------------------------------------------
def cmd_table(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.design == "tpi":
        tpi_config = config.tpi_config()
        c = tpi_config.cohort_size
        group_sizes = args.group_sizes or [c, 2 * c]
        table = tpi_monitoring_table(tpi_config, group_sizes)
    else:
        if args.group_sizes:
            raise ConfigError("group_sizes: задаётся только для дизайна tpi")
        table = monitoring_table(RuleDesignConfig(cohort_size=RULE_COHORT_SIZES[config.design]))

    if args.format == "csv":
        _emit_csv(table.to_frame(), args.output)
    else:
        print(_render_table(table, _use_color(sys.stdout)))
        if args.output:
            table.to_frame().to_csv(args.output, index=False, lineterminator="\n")
    return EXIT_OK


def cmd_worst_case(args: argparse.Namespace) -> int:
    designs = args.designs or list(DESIGNS)
    for design in designs:
        if design not in DESIGNS:
            raise ConfigError(f"designs: неизвестный дизайн {design!r}")
    v_values = args.v if args.v else parse_grid(args.grid)
    for v in v_values:
        if not 0.0 < v <= 1.0:
            raise ConfigError(f"v: значение {v} вне (0, 1]")

    frame = curve_grid(designs, v_values)
    _emit_csv(frame, args.output)

    if args.svg:
        plot_worst_case_curves(frame, args.svg)
        print(f"SVG сохранён: {args.svg}", file=sys.stderr)

    status = EXIT_OK
    if args.verify:
        failures = verify_grid(designs, v_values)
        for design, v, diff in failures:
            print(f"расхождение формулы и ряда: {design}, v={v:g}, |разница|={diff:.3e}",
                  file=sys.stderr)
        if failures:
            status = EXIT_VERIFY
        else:
            print(f"проверка рядом: {len(designs) * len(v_values)} точек совпадают", file=sys.stderr)

    if args.monte_carlo:
        rows = []
        for design in designs:
            for v in v_values:
                query = WorstCaseQuery(design, v)
                bound = r_monte_carlo(query, d=args.first_toxic, levels=args.levels,
                                      reps=args.monte_carlo, seed=args.seed, workers=args.workers)
                exact = r_closed_form(query)
                se = binomial_standard_error(exact, args.monte_carlo)
                within = abs(bound.estimate - exact) <= 3 * se + bound.truncated_fraction
                rows.append({"design": design, "v": v, "closed_form": exact,
                             "estimate": bound.estimate, "se": se,
                             "truncated_fraction": bound.truncated_fraction, "within_3se": within})
                if args.verify and not within:
                    status = EXIT_VERIFY
        print(pd.DataFrame(rows).to_string(index=False), file=sys.stderr)
    return status


def _summary_frame(summary, curve: DoseToxicityCurve) -> pd.DataFrame:
    rows = []
    for dose in range(1, curve.num_doses + 1):
        rows.append({
            "dose": dose,
            "p_true": curve.prob(dose),
            "P(MTD)": summary.mtd_distribution.get(dose, 0.0),
            "mean_patients": summary.mean_patients_per_dose[dose - 1],
        })
    rows.append({"dose": "none", "p_true": float("nan"),
                 "P(MTD)": summary.mtd_distribution.get(None, 0.0), "mean_patients": float("nan")})
    return pd.DataFrame(rows)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.curve is None:
        raise ConfigError("curve: кривая доза-токсичность обязательна для simulate")
    curve = DoseToxicityCurve(config.curve)
    design = build_design(config)

    if args.trace:
        model = DoseFindingModel(design, curve, seed=config.seed)
        model.run_model()
        outcome = model.outcome()
        print(model.trace().to_string())
        print(f"МПД: {outcome.mtd if outcome.mtd is not None else 'нет'}, "
              f"пациентов: {outcome.total_patients}, DLT: {outcome.total_dlts}, "
              f"статус: {outcome.status.value}")
        return EXIT_OK

    thresholds = tuple(args.thresholds) if args.thresholds else DEFAULT_THRESHOLDS
    summary = simulate(design, curve, config.reps, config.seed,
                       thresholds=thresholds, workers=config.workers,
                       engine=args.engine)
    payload = json.dumps(summary.to_dict(), indent=2)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            f.write(payload + "\n")

    if args.format in ("json", "both"):
        print(payload)
    if args.format in ("table", "both"):
        if args.format == "both":
            print()
        print(_summary_frame(summary, curve).to_string(index=False))
        print(f"среднее число пациентов: {summary.mean_total_patients:.4f}")
        print(f"среднее число DLT: {summary.mean_total_dlts:.4f}")
        for v, p in summary.prob_mtd_rate_at_least.items():
            print(f"P(доля DLT на МПД >= {v:g}) = {p:.4f}")
        print(f"доля прогонов у верхней дозы: {summary.truncated_fraction:.4g}")
    return EXIT_OK


def cmd_equivalence(args: argparse.Namespace) -> int:
    metric_name = args.metric.strip().lower().replace("-", "_")
    try:
        metric = DecisionMetric(metric_name)
    except ValueError:
        raise ConfigError(f"metric: неизвестная метрика {args.metric!r}") from None
    if not 1 <= args.max_doses <= 4:
        raise ConfigError(f"max_doses: ожидалось 1..4, получено {args.max_doses}")

    results = run_equivalence(metric, isotonic_only=args.isotonic_only, max_doses=args.max_doses)
    first_failure = None
    for result in results:
        print(f"[{'OK' if result.passed else 'FAIL'}] {result.name}")
        for line in result.details:
            print(f"    {line}")
        if not result.passed and first_failure is None:
            first_failure = f"{result.name}: {result.first_failure}"

    if first_failure is not None:
        print(f"первая ошибка: {first_failure}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_isotonic(args: argparse.Namespace) -> int:
    pairs = _parse_counts(args.counts)
    visited = [(dose, t, n) for dose, (t, n) in enumerate(pairs, start=1) if n > 0]
    if not visited:
        raise ValueError("--counts: нет ни одной посещённой дозы")

    doses = [dose for dose, _, _ in visited]
    values = [t / n for _, t, n in visited]
    weights = [float(n) for _, _, n in visited]
    fit = pava(values, weights)

    print("доза  t/n  оценка  подгонка")
    for (dose, t, n), value, fitted in zip(visited, values, fit.fitted):
        print(f"{dose:>4}  {t}/{n}  {value:.12g}  {fitted:.12g}")

    def show(dose: Optional[int]) -> str:
        return "нет" if dose is None else str(dose)

    if args.rule in ("largest-below", "both"):
        print(f"МПД (наибольшая с оценкой <= {args.p_target:g}): "
              f"{show(mtd_largest_below(fit, args.p_target, doses))}")
    if args.rule in ("closest", "both"):
        print(f"МПД (ближайшая к {args.p_target:g}): {show(mtd_closest(fit, args.p_target, doses))}")
    return EXIT_OK


# -----------------------------------------------------------------------------
# Точка входа
# -----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dose-finding",
                                     description="Дизайны подбора дозы фазы I: 3+3, варианты, TPI")
    parser.add_argument("--verbose", action="store_true", help="подробный журнал (DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    table = sub.add_parser("table", help="таблица мониторинга")
    _add_design_options(table)
    table.add_argument("--group-sizes", type=_ints, help="размеры групп для TPI, например 3,6")
    table.add_argument("--format", choices=("text", "csv"), default="text")
    table.add_argument("--output", help="путь для CSV")
    table.set_defaults(func=cmd_table)

    worst = sub.add_parser("worst-case", help="наихудшие вероятности r(v)")
    worst.add_argument("--v", type=float, nargs="+", help="одно или несколько значений v")
    worst.add_argument("--grid", default="0.05:0.95:0.05", help="start:stop:step")
    worst.add_argument("--designs", type=lambda s: [p.strip() for p in s.split(",") if p.strip()],
                       help=f"список из {', '.join(DESIGNS)}")
    worst.add_argument("--output", help="путь для CSV")
    worst.add_argument("--svg", help="путь для SVG с кривыми")
    worst.add_argument("--verify", action="store_true", help="сверка замкнутой формы с рядом")
    worst.add_argument("--monte-carlo", type=int, metavar="REPS", help="проверка Монте-Карло")
    worst.add_argument("--first-toxic", type=int, default=3, help="первая токсичная доза d")
    worst.add_argument("--levels", type=int, default=200)
    worst.add_argument("--seed", type=int, default=0)
    worst.add_argument("--workers", type=int, default=1)
    worst.set_defaults(func=cmd_worst_case)

    sim = sub.add_parser("simulate", help="операционные характеристики")
    _add_design_options(sim)
    sim.add_argument("--curve", type=_floats, help="вероятности DLT по дозам через запятую")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int)
    sim.add_argument("--thresholds", type=_floats)
    sim.add_argument("--engine", choices=ENGINES, default=ENGINE_TRIAL,
                     help="lockstep - векторный прогон для дизайнов на правилах")
    sim.add_argument("--format", choices=("json", "table", "both"), default="both")
    sim.add_argument("--json", help="путь для JSON-сводки")
    sim.add_argument("--trace", action="store_true", help="одно испытание пошагово")
    sim.set_defaults(func=cmd_simulate)

    eq = sub.add_parser("equivalence", help="проверки эквивалентности")
    eq.add_argument("--metric", default="length-normalized")
    eq.add_argument("--isotonic-only", action="store_true")
    eq.add_argument("--max-doses", type=int, default=4)
    eq.set_defaults(func=cmd_equivalence)

    iso = sub.add_parser("isotonic", help="изотоническая оценка по счётчикам")
    iso.add_argument("--counts", required=True, help="пары t/n по дозам, например 0/3,1/6,2/3")
    iso.add_argument("--p-target", type=float, default=0.2)
    iso.add_argument("--rule", choices=("largest-below", "closest", "both"), default="both")
    iso.set_defaults(func=cmd_isotonic)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logger.debug("Команда %s, аргументы: %s", args.command, vars(args))
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"ошибка: {exc}", file=sys.stderr)
        return EXIT_USAGE
