"""Grid-tuned runs of each method on the synthetic benchmark problem.

Every method starts from the default iterate (lam=1, beta=0, gamma=0) and
gets its step size from ``ETA_GRID``; the value with the smallest
suboptimality at the pass budget wins.  Grid points that diverge are skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .data import Dataset, SynthSpec, synth_generate
from .errors import DivergenceError
from .eval import ReferenceSolution, compute_reference
from .model import ProblemParams
from .solvers import (ETA_GRID, EvalHooks, SevrConfig, SolverTrace, SpprrConfig, sevr_run, sgda_run,
                      spprr_run, ssg_run)

SUBOPT_FLOOR = 1e-12  # below this, f differences are rounding noise for n in the thousands


@dataclass
class Problem:
    ds: Dataset
    p: ProblemParams
    ref: ReferenceSolution
    seed: int


def synthetic_problem(seed: int, n: int = 5000, d: int = 100, delta: float = 0.1,
                      kappa: float = 1.0) -> Problem:
    ds, _ = synth_generate(SynthSpec(n=n, d=d, noise_var=0.2, seed=seed))
    p = ProblemParams(delta=delta, kappa=kappa)
    return Problem(ds, p, compute_reference(ds, p), seed)


def sevr_k0(passes: float, n: int, B: int, S: int) -> int:
    """Largest k0 whose S-epoch run fits in ``passes`` data passes."""
    return max(1, math.floor((passes - S) * n / (4 * B * (2 ** S - 1))))


def run_method(name: str, prob: Problem, eta: float, passes: float, batch: int = 32, M: int = 2,
               S_sevr: int = 5) -> SolverTrace:
    ds, p, seed = prob.ds, prob.p, prob.seed
    hooks = EvalHooks(ds, p, prob.ref, max_passes=passes)
    if name == "SPPRR":
        cfg = SpprrConfig(eta=eta, epochs_S=max(1, math.ceil(passes / M)), fixed_point_M=M, seed=seed)
        return spprr_run(ds, p, cfg, hooks)
    if name == "SEVR":
        cfg = SevrConfig(eta=eta, k0=sevr_k0(passes, ds.n, batch, S_sevr), epochs_S=S_sevr,
                         batch_B=batch, seed=seed)
        return sevr_run(ds, p, cfg, hooks)
    iters = math.ceil(passes * ds.n / batch)
    if name == "SGDA":
        return sgda_run(ds, p, eta, iters, batch=batch, seed=seed, hooks=hooks)
    if name == "SSG":
        return ssg_run(ds, p, eta, iters, batch=batch, seed=seed, hooks=hooks)
    raise ValueError(f"unknown method {name!r}")


def final_subopt(trace: SolverTrace) -> float:
    return max(trace.records[-1].suboptimality, SUBOPT_FLOOR)


def tuned(name: str, prob: Problem, passes: float, grid=ETA_GRID, **kw) -> tuple[float, SolverTrace]:
    """(best eta, its trace); the SPPRR grid is clipped to the contraction range."""
    if name == "SPPRR":
        cap = 1.0 / (2.0 * prob.p.lipschitz_F)
        grid = sorted({min(eta, cap) for eta in grid})
    best = None
    for eta in grid:
        try:
            tr = run_method(name, prob, eta, passes, **kw)
        except DivergenceError:
            continue
        val = final_subopt(tr)
        if math.isfinite(val) and (best is None or val < best[0]):
            best = (val, eta, tr)
    if best is None:
        raise DivergenceError(f"{name}: every grid point diverged")
    return best[1], best[2]
