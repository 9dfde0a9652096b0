from mesa import Model
from mesa.datacollection import DataCollector

from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    CohortRecord,
    DoseFindingDesign,
    DoseToxicityCurve,
    TrialOutcome,
    advance,
    to_outcome,
)


class DoseFindingModel(Model):
    """
    Пошаговое проведение одного испытания: шаг модели - одна когорта.
    Порядок розыгрышей совпадает с core.run_trial, поэтому при одинаковом
    зерне итог тот же.
    """

    def __init__(
        self,
        design: DoseFindingDesign,
        curve: Union[DoseToxicityCurve, Sequence[float]],
        seed: Optional[int] = None,
    ):
        super().__init__()
        if not isinstance(curve, DoseToxicityCurve):
            curve = DoseToxicityCurve(tuple(curve))
        if curve.num_doses != design.num_doses:
            raise ValueError(f"Длина кривой {curve.num_doses} не совпадает с числом доз "
                             f"дизайна {design.num_doses}")
        self.design = design
        self.curve = curve
        self.seed = seed
        self.rng = np.random.default_rng(seed)

        self.state = design.initial_state()
        self.last_cohort: Optional[CohortRecord] = None

        # DataCollector
        self.datacollector = DataCollector(
            model_reporters={
                "Dose": lambda m: m.last_cohort.dose,
                "CohortSize": lambda m: m.last_cohort.size,
                "DLTs": lambda m: m.last_cohort.dlts,
                "TotalPatients": lambda m: m.state.total_patients,
                "TotalDLTs": lambda m: m.state.total_dlts,
                "Excluded": lambda m: len(m.state.excluded),
                "NextDose": lambda m: m.state.current_dose if m.state.is_active else None,
                "Status": lambda m: m.state.status.value,
            }
        )
        self.running = True

    # ----------------------------------------------------------------------
    def step(self):
        if not self.state.is_active:
            self.running = False
            return

        size = self.design.cohort_size(self.state)
        dlts = int(self.rng.binomial(size, self.curve.prob(self.state.current_dose)))
        self.state = advance(self.design, self.state, dlts, size)
        self.last_cohort = self.state.cohort_log[-1]

        self.datacollector.collect(self)
        self.running = self.state.is_active

    def outcome(self) -> TrialOutcome:
        return to_outcome(self.design, self.state)

    def trace(self):
        """Таблица по когортам (pandas DataFrame)."""
        return self.datacollector.get_model_vars_dataframe()
