"""Theory-driven parameter choices for SEVR and SPPRR, plus a G estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..geometry import ConeSpec, project_cone
from ..model import Iterate, ProblemParams, margins
from .sevr import SevrConfig
from .spprr import SpprrConfig
from .trace import default_start, make_rng

# the step-size grid used for hand tuning in experiment configs
ETA_GRID = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0)


@dataclass(frozen=True)
class TheoryScheduleInputs:
    D_u: float
    D_L: float
    epsilon: float
    G: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        for name in ("D_u", "D_L", "G"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite")


def sevr_theory_schedule(inputs: TheoryScheduleInputs, p: ProblemParams, batch_B: int = 32,
                         seed: int = 0) -> SevrConfig:
    lip = p.lipschitz_F
    eps, Du, DL = inputs.epsilon, inputs.D_u, inputs.D_L
    S = 1 + math.floor(math.log2(10.0 * DL / eps))
    eta = min(1.0 / (100.0 * lip),
              eps / (2000.0 * math.sqrt(2.0) * lip ** 2 * Du ** 2),
              Du ** 2 / DL)
    k0 = math.ceil(Du ** 2 / (eta * DL))
    return SevrConfig(eta=eta, k0=max(1, k0), epochs_S=max(1, S), batch_B=batch_B, seed=seed)


def spprr_epochs(inputs: TheoryScheduleInputs, n: int, p: ProblemParams) -> int:
    """Smallest S with 2 Lip Du^2/(nS) + 3 G^2 Du^2/(eps n S) <= eps/2."""
    lip = p.lipschitz_F
    eps, Du, G = inputs.epsilon, inputs.D_u, inputs.G
    bound = 2.0 * lip * Du ** 2 / eps + 3.0 * G ** 2 * Du ** 2 / eps ** 2
    return max(1, math.ceil(2.0 * bound / n))


def spprr_theory_schedule(inputs: TheoryScheduleInputs, n: int, p: ProblemParams,
                          seed: int = 0) -> SpprrConfig:
    if n < 1:
        raise ValueError("n must be positive")
    lip = p.lipschitz_F
    eta = min(1.0 / (2.0 * lip), inputs.epsilon / (4.0 * inputs.G ** 2))
    S = spprr_epochs(inputs, n, p)
    M = 1 + math.floor(math.log2(10.0 * n * S))
    return SpprrConfig(eta=eta, epochs_S=S, fixed_point_M=M, seed=seed)


def _component_norms(u: Iterate, ds: Dataset, p: ProblemParams) -> np.ndarray:
    """||F_i(u)|| for every i, computed in one sweep."""
    t = margins(ds, u.beta)
    d_lam = p.delta - p.kappa * (1.0 + u.gamma)
    coef = p.link.derivative(t) + u.gamma * ds.y
    d_g = -(ds.y * t - u.lam * p.kappa)
    sq = d_lam ** 2 + (coef ** 2) * ds.row_norms ** 2 + d_g ** 2
    return np.sqrt(sq)


def estimate_G(ds: Dataset, p: ProblemParams, lam_cap: float = 10.0, n_points: int = 100,
               seed: int = 0, u0: Iterate | None = None) -> float:
    """Max of ||F_i|| over the start point and random feasible points with lambda <= lam_cap.

    The supremum over the whole cone is infinite, so this is a heuristic bound.
    """
    rng = make_rng(seed)
    cone = ConeSpec(p.cone_ratio)
    best = float(np.max(_component_norms(u0 if u0 is not None else default_start(ds, p), ds, p)))
    for _ in range(n_points):
        lam = rng.uniform(0.0, lam_cap)
        direction = rng.standard_normal(ds.d)
        direction /= max(np.linalg.norm(direction), 1e-300)
        beta = direction * rng.uniform(0.0, lam / p.cone_ratio)
        lam, beta = project_cone(lam, beta, cone)
        gamma = rng.uniform(-1.0, 1.0, size=ds.n)
        best = max(best, float(np.max(_component_norms(Iterate(lam, beta, gamma), ds, p))))
    return best
