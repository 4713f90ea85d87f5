"""Stochastic proximal point with random reshuffling (SPPRR).

Each epoch visits the samples in a fresh uniformly random order.  The
implicit step u+ = P(u - eta * F_i(u+)) is solved inexactly by M fixed-point
iterations of T(v) = P(u - eta * F_i(v)), a 1/2-contraction whenever
eta <= 1 / (2 (ell + kappa + 1)).

Only lambda, beta and gamma_i move during a step on sample i, so a step
costs O(nnz(x_i) + d).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import DivergenceError
from ..geometry import ConeSpec, project_cone
from ..model import Iterate, ProblemParams
from .trace import EvalHooks, LazyAverage, Recorder, SolverTrace, default_start, make_rng


@dataclass
class SpprrConfig:
    eta: float
    epochs_S: int
    fixed_point_M: int = 2
    seed: int = 0
    checkpoint_every_passes: float = 0.5

    def __post_init__(self):
        if self.fixed_point_M < 1:
            raise ValueError("fixed_point_M must be >= 1")
        if self.epochs_S < 1:
            raise ValueError("epochs_S must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def checked_eta(self, p: ProblemParams) -> float:
        """eta, clamped (with a warning) to the contraction range."""
        cap = 1.0 / (2.0 * p.lipschitz_F)
        if self.eta > cap:
            warnings.warn(f"SPPRR eta={self.eta:g} exceeds 1/(2(ell+kappa+1))={cap:g}; clamping",
                          stacklevel=3)
            return cap
        return self.eta


def _prox_map(anchor_lam, anchor_beta, anchor_g, lam, beta, g, cols, vals, y, eta, p, c):
    """T(v) = P(anchor - eta * F_i(v)) restricted to the coordinates F_i touches.

    Returns (lam', beta', g').  ``beta'`` is a fresh array.
    """
    t = float(vals @ beta[cols])
    d_lam = p.delta - p.kappa * (1.0 + g)
    coef = float(p.link.derivative(t)) + g * y
    d_g = -(y * t - lam * p.kappa)
    new_beta = anchor_beta.copy()
    new_beta[cols] -= (eta * coef) * vals
    new_lam, new_beta = _cone(anchor_lam - eta * d_lam, new_beta, c)
    new_g = min(1.0, max(-1.0, anchor_g - eta * d_g))
    return new_lam, new_beta, new_g


def _cone(lam, beta, c):
    r = math.sqrt(float(beta @ beta))
    if c * r <= lam:
        return lam, beta
    if r == 0.0:
        return max(lam, 0.0), beta
    if lam <= -r / c:
        return 0.0, np.zeros_like(beta)
    rho = (c * lam + r) / (1.0 + c * c)
    beta *= rho / r
    return c * rho, beta


def prox_operator(anchor: Iterate, i: int, eta: float, ds: Dataset, p: ProblemParams):
    """The full-dimensional map T(v) = P(anchor - eta * F_i(v)) for a given anchor point."""
    c = p.cone_ratio
    cols, vals = ds.row(i)
    y = float(ds.y[i])

    def T(v: Iterate) -> Iterate:
        lam, beta, g = _prox_map(anchor.lam, anchor.beta, float(anchor.gamma[i]),
                                 v.lam, v.beta, float(v.gamma[i]), cols, vals, y, eta, p, c)
        gamma = np.clip(anchor.gamma, -1.0, 1.0)
        gamma[i] = g
        return Iterate(lam, beta, gamma)

    return T


def prox_step(u: Iterate, i: int, eta: float, M: int, ds: Dataset, p: ProblemParams) -> list[Iterate]:
    """Run M fixed-point iterations from u; returns [u_0, u_1, ..., u_M]."""
    T = prox_operator(u, i, eta, ds, p)
    out = [u.copy()]
    for _ in range(M):
        out.append(T(out[-1]))
    return out


def spprr_run(ds: Dataset, p: ProblemParams, cfg: SpprrConfig, hooks: EvalHooks | None = None,
              u0: Iterate | None = None, report: str = "avg") -> SolverTrace:
    """Run SPPRR for ``cfg.epochs_S`` epochs.

    The reported point is the running average over all inner iterates (the
    point the convergence theory covers) unless ``report='raw'``.
    """
    if ds.n == 0:
        raise ValueError("empty dataset")
    eta = cfg.checked_eta(p)
    M = cfg.fixed_point_M
    c = p.cone_ratio
    cone = ConeSpec(c)
    rng = make_rng(cfg.seed)
    if hooks is None:
        hooks = EvalHooks(ds, p, every_passes=cfg.checkpoint_every_passes)
    rec = Recorder("SPPRR", cfg.seed, ds, p, hooks)

    u = u0.copy() if u0 is not None else default_start(ds, p)
    lam, beta = project_cone(u.lam, u.beta, cone)
    gamma = np.clip(u.gamma, -1.0, 1.0)

    lam_sum = 0.0
    beta_sum = np.zeros(ds.d)
    gamma_avg = LazyAverage(gamma)

    def averaged() -> Iterate:
        k = gamma_avg.count
        if k == 0:
            return Iterate(lam, beta.copy(), gamma.copy())
        return Iterate(lam_sum / k, beta_sum / k, gamma_avg.mean(gamma))

    def current() -> Iterate:
        return Iterate(lam, beta.copy(), gamma.copy())

    X, Y = ds.X, ds.y
    indptr, indices, data = X.indptr, X.indices, X.data
    rec.checkpoint(current(), averaged(), report=report)
    for s in range(cfg.epochs_S):
        rec.epoch = s
        sigma = rng.permutation(ds.n)
        for i in sigma:
            lo, hi = indptr[i], indptr[i + 1]
            cols, vals = indices[lo:hi], data[lo:hi]
            y = Y[i]
            g0 = gamma[i]
            v_lam, v_beta, v_g = lam, beta, g0
            for _ in range(M):
                v_lam, v_beta, v_g = _prox_map(lam, beta, g0, v_lam, v_beta, v_g,
                                               cols, vals, y, eta, p, c)
            rec.add(M)
            gamma_avg.before_change(gamma, i)
            lam, beta = v_lam, v_beta
            gamma[i] = v_g
            gamma_avg.tick()
            lam_sum += lam
            beta_sum += beta
            if not math.isfinite(lam):
                raise DivergenceError("SPPRR: non-finite lambda")
            if rec.due():
                rec.checkpoint(current(), averaged(), report=report)
            if not rec.budget_left():
                break
        if not rec.budget_left():
            break
    trace = rec.finish(current(), averaged(), report=report)
    trace.meta.update(eta=eta, M=M, report=report)
    return trace
