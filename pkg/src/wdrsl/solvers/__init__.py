"""Saddle-point solvers, baselines and schedules."""
from .baselines import extragda_run, extrasgda_run, gda_run, sgda_run, ssg_run, subgrad_run
from .schedules import (ETA_GRID, TheoryScheduleInputs, estimate_G, sevr_theory_schedule,
                        spprr_theory_schedule)
from .sevr import SevrConfig, sevr_run
from .spprr import SpprrConfig, prox_operator, prox_step, spprr_run
from .trace import CheckpointRecord, EvalHooks, SolverTrace, default_start, make_rng

__all__ = [
    "SevrConfig", "sevr_run", "SpprrConfig", "spprr_run", "prox_operator", "prox_step",
    "gda_run", "extragda_run", "sgda_run", "extrasgda_run", "subgrad_run", "ssg_run",
    "TheoryScheduleInputs", "sevr_theory_schedule", "spprr_theory_schedule", "estimate_G", "ETA_GRID",
    "CheckpointRecord", "EvalHooks", "SolverTrace", "default_start", "make_rng",
]
