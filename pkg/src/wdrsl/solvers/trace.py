"""Checkpointing, cost accounting and shared plumbing for solver runs."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import DivergenceError
from ..geometry import ConeSpec
from ..model import Iterate, ProblemParams, convex_objective_f, duality_gap, objective_L

DIVERGENCE_LIMIT = 1e12


def make_rng(seed: int) -> np.random.Generator:
    """One PCG64 stream per solver run, seeded through SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def default_start(ds: Dataset, p: ProblemParams) -> Iterate:
    return Iterate(1.0, np.zeros(ds.d), np.zeros(ds.n))


@dataclass
class CheckpointRecord:
    epoch: int
    data_passes: float
    component_evals: int
    suboptimality: float
    gap: float | None
    wall_ms: float
    objective: float = math.nan
    subopt_raw: float = math.nan
    subopt_avg: float = math.nan


@dataclass
class SolverTrace:
    algo: str
    seed: int
    records: list[CheckpointRecord] = field(default_factory=list)
    final_iterate: Iterate | None = None
    averaged_iterate: Iterate | None = None
    step_sizes: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def passes_to(self, threshold: float) -> float | None:
        """Data passes at the first checkpoint with suboptimality <= threshold."""
        for r in self.records:
            if r.suboptimality <= threshold:
                return r.data_passes
        return None

    def subopt_at(self, passes: float) -> float:
        """Suboptimality at the last checkpoint not beyond ``passes``."""
        best = math.nan
        for r in self.records:
            if r.data_passes <= passes + 1e-12:
                best = r.suboptimality
        return best


class EvalHooks:
    """What a run measures at checkpoints.

    ``ref`` is any object with ``f_star`` (and the saddle fields when
    ``record_gap`` is set).  Without it, suboptimality is reported as NaN and
    only the objective is stored.
    """

    def __init__(self, ds: Dataset, p: ProblemParams, ref=None, every_passes: float = 0.5,
                 record_gap: bool = False, check_feasible: bool = True,
                 feas_tol: float = 1e-10, max_passes: float | None = None):
        self.ds = ds
        self.p = p
        self.ref = ref
        self.every_passes = every_passes
        self.record_gap = record_gap and ref is not None
        self.check_feasible = check_feasible
        self.feas_tol = feas_tol
        self.max_passes = max_passes

    def subopt(self, lam: float, beta: np.ndarray) -> tuple[float, float]:
        fval = convex_objective_f(lam, beta, self.ds, self.p)
        if self.ref is None:
            return fval, math.nan
        return fval, fval - self.ref.f_star


class Recorder:
    """Accumulates evaluation counts and writes checkpoints at a fixed pass cadence."""

    def __init__(self, algo: str, seed: int, ds: Dataset, p: ProblemParams, hooks: EvalHooks | None):
        self.ds = ds
        self.p = p
        self.hooks = hooks if hooks is not None else EvalHooks(ds, p)
        self.n = ds.n
        self.cone = ConeSpec(p.cone_ratio)
        self.trace = SolverTrace(algo, seed)
        self.evals = 0
        self.epoch = 0
        self._step = max(1, int(round(self.hooks.every_passes * self.n)))
        self._next = 0
        self._last_recorded = -1
        self._t0 = time.perf_counter()

    def add(self, count: int) -> None:
        self.evals += count

    @property
    def passes(self) -> float:
        return self.evals / self.n

    def budget_left(self) -> bool:
        mp = self.hooks.max_passes
        return mp is None or self.evals < mp * self.n

    def due(self) -> bool:
        return self.evals >= self._next and self.evals != self._last_recorded

    def checkpoint(self, raw: Iterate, avg: Iterate | None = None, report: str = "raw",
                   force: bool = False) -> None:
        if not (force or self.due()):
            return
        if self.evals == self._last_recorded:
            return
        self.guard(raw)
        h = self.hooks
        if h.check_feasible:
            for it in (raw, avg):
                if it is not None and not it.is_feasible(self.cone.ratio_c, h.feas_tol):
                    raise AssertionError(f"{self.trace.algo}: infeasible iterate at {self.evals} evals")
        obj_raw, sub_raw = h.subopt(raw.lam, raw.beta)
        sub_avg = math.nan
        obj_avg = math.nan
        if avg is not None:
            obj_avg, sub_avg = h.subopt(avg.lam, avg.beta)
        use_avg = report == "avg" and avg is not None
        reported = avg if use_avg else raw
        gap = None
        if h.record_gap and reported.gamma is not None and reported.gamma.size == self.n:
            gap = duality_gap(reported, h.ref, self.ds, self.p)
        wall = (time.perf_counter() - self._t0) * 1e3
        self.trace.records.append(CheckpointRecord(
            epoch=self.epoch,
            data_passes=self.evals / self.n,
            component_evals=self.evals,
            suboptimality=sub_avg if use_avg else sub_raw,
            gap=gap,
            wall_ms=wall,
            objective=obj_avg if use_avg else obj_raw,
            subopt_raw=sub_raw,
            subopt_avg=sub_avg,
        ))
        self._last_recorded = self.evals
        while self._next <= self.evals:
            self._next += self._step

    def guard(self, u: Iterate) -> None:
        if not (math.isfinite(u.lam) and np.all(np.isfinite(u.beta))
                and (u.gamma is None or np.all(np.isfinite(u.gamma)))):
            raise DivergenceError(f"{self.trace.algo}: non-finite iterate after {self.evals} evals",)
        gamma = u.gamma if u.gamma is not None and u.gamma.size == self.n else np.zeros(self.n)
        val = objective_L(Iterate(u.lam, u.beta, gamma), self.ds, self.p)
        if not math.isfinite(val) or abs(val) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"{self.trace.algo}: |L| = {val:.3g} after {self.evals} evals")

    def finish(self, final: Iterate, averaged: Iterate | None, raw: Iterate | None = None,
               report: str = "raw") -> SolverTrace:
        self.checkpoint(raw if raw is not None else final, averaged, report=report, force=True)
        self.trace.final_iterate = final
        self.trace.averaged_iterate = averaged
        return self.trace


class LazyAverage:
    """Running time-average of a vector whose coordinates change sparsely.

    Coordinate ``i`` accumulates ``value * (now - last_touch[i])`` only when
    it is modified or when the average is read.
    """

    def __init__(self, x0: np.ndarray):
        self.acc = np.zeros_like(x0)
        self.last = np.zeros(x0.shape[0], dtype=np.int64)
        self.count = 0

    def before_change(self, x: np.ndarray, i: int) -> None:
        self.acc[i] += x[i] * (self.count - self.last[i])
        self.last[i] = self.count

    def tick(self) -> None:
        self.count += 1

    def mean(self, x: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return x.copy()
        total = self.acc + x * (self.count - self.last)
        return total / self.count
