"""Stochastic extragradient with variance reduction (SEVR).

Epoch s runs k0 * 2**s extragradient steps whose operator estimates are
anchored at a reference point u~ with cached F(u~):

    g    = F(u~) + mean_{i in I}(F_i(u)    - F_i(u~)),   u_bar  = P(u - eta_t g)
    gbar = F(u~) + mean_{j in J}(F_j(u_bar) - F_j(u~)),  u_next = P(u - eta_t gbar)

with eta_t = eta * sqrt(T) / sqrt(2T - l) and l the global step counter.
The next reference point is the average of the epoch's iterates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..geometry import ConeSpec, project_cone
from ..model import Iterate, ProblemParams, full_operator
from .trace import EvalHooks, Recorder, SolverTrace, default_start, make_rng


@dataclass
class SevrConfig:
    eta: float
    k0: int
    epochs_S: int
    batch_B: int = 32
    seed: int = 0
    checkpoint_every_passes: float = 0.5

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")
        if self.epochs_S < 1:
            raise ValueError("epochs_S must be >= 1")
        if self.batch_B < 1:
            raise ValueError("batch_B must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def total_steps(self) -> int:
        """T = k0 * 2**S - k0."""
        return self.k0 * 2 ** self.epochs_S - self.k0

    def epoch_lengths(self) -> list[int]:
        return [self.k0 * 2 ** s for s in range(self.epochs_S)]

    def step_size(self, l: int) -> float:
        T = self.total_steps
        return self.eta * math.sqrt(T) / math.sqrt(2 * T - l)

    def expected_evals(self, n: int) -> int:
        return sum(n + 4 * self.batch_B * k for k in self.epoch_lengths())


def _correction(X, y, idx, beta, gamma, lam, t_ref, gamma_ref, lam_ref, p, B):
    """Batch-averaged F_I(u) - F_I(u~); the gamma part is one value per batch entry."""
    XI = X[idx]
    t = XI @ beta
    g, g_ref = gamma[idx], gamma_ref[idx]
    yi = y[idx]
    tr = t_ref[idx]
    d_lam = -p.kappa * np.sum(g - g_ref) / B
    coef = (p.link.derivative(t) + g * yi) - (p.link.derivative(tr) + g_ref * yi)
    d_beta = (XI.T @ coef) / B
    d_gam = (-(yi * t - lam * p.kappa) + (yi * tr - lam_ref * p.kappa)) / B
    return d_lam, d_beta, d_gam


def _full_batch_correction(X, y, beta, gamma, lam, t_ref, gamma_ref, lam_ref, p, n):
    t = X @ beta
    d_lam = -p.kappa * np.sum(gamma - gamma_ref) / n
    coef = (p.link.derivative(t) + gamma * y) - (p.link.derivative(t_ref) + gamma_ref * y)
    d_beta = (X.T @ coef) / n
    d_gam = (-(y * t - lam * p.kappa) + (y * t_ref - lam_ref * p.kappa)) / n
    return d_lam, d_beta, d_gam


def sevr_run(ds: Dataset, p: ProblemParams, cfg: SevrConfig, hooks: EvalHooks | None = None,
             u0: Iterate | None = None, report: str = "raw") -> SolverTrace:
    """Run SEVR.

    Batches of size B are drawn uniformly with replacement; two independent
    batches per step.  With B == n every index is used once, so the estimate
    equals the full operator.  The trace's final iterate is u~^S.
    """
    n = ds.n
    if n == 0:
        raise ValueError("empty dataset")
    B = cfg.batch_B
    if B > n:
        raise ValueError("batch_B must not exceed n")
    full_batch = B == n
    cone = ConeSpec(p.cone_ratio)
    rng = make_rng(cfg.seed)
    if hooks is None:
        hooks = EvalHooks(ds, p, every_passes=cfg.checkpoint_every_passes)
    rec = Recorder("SEVR", cfg.seed, ds, p, hooks)
    X, Y = ds.X, ds.y

    u = u0.copy() if u0 is not None else default_start(ds, p)
    lam, beta = project_cone(u.lam, u.beta, cone)
    gamma = np.clip(u.gamma, -1.0, 1.0)
    ref = Iterate(lam, beta.copy(), gamma.copy())
    rec.checkpoint(Iterate(lam, beta, gamma), ref, report=report)

    def project(l, b, g):
        l, b = project_cone(l, b, cone)
        np.clip(g, -1.0, 1.0, out=g)
        return l, b, g

    step = 0
    for s, k_s in enumerate(cfg.epoch_lengths()):
        rec.epoch = s
        F_ref = full_operator(ref, ds, p)
        t_ref = X @ ref.beta
        rec.add(n)
        lam_acc, beta_acc, gamma_acc = 0.0, np.zeros(ds.d), np.zeros(n)
        for t in range(k_s):
            step += 1
            eta_t = cfg.step_size(step)
            rec.trace.step_sizes.append(eta_t)
            # extrapolation
            if full_batch:
                cl, cb, cg = _full_batch_correction(X, Y, beta, gamma, lam, t_ref, ref.gamma, ref.lam, p, n)
                g_gamma = F_ref.d_gamma + cg
            else:
                I = rng.integers(0, n, size=B)
                cl, cb, cg = _correction(X, Y, I, beta, gamma, lam, t_ref, ref.gamma, ref.lam, p, B)
                g_gamma = F_ref.d_gamma.copy()
                np.add.at(g_gamma, I, cg)
            bar_l, bar_b, bar_g = project(lam - eta_t * (F_ref.d_lambda + cl),
                                          beta - eta_t * (F_ref.d_beta + cb),
                                          gamma - eta_t * g_gamma)
            # update
            if full_batch:
                cl, cb, cg = _full_batch_correction(X, Y, bar_b, bar_g, bar_l, t_ref, ref.gamma, ref.lam, p, n)
                g_gamma = F_ref.d_gamma + cg
            else:
                J = rng.integers(0, n, size=B)
                cl, cb, cg = _correction(X, Y, J, bar_b, bar_g, bar_l, t_ref, ref.gamma, ref.lam, p, B)
                g_gamma = F_ref.d_gamma.copy()
                np.add.at(g_gamma, J, cg)
            lam, beta, gamma = project(lam - eta_t * (F_ref.d_lambda + cl),
                                       beta - eta_t * (F_ref.d_beta + cb),
                                       gamma - eta_t * g_gamma)
            rec.add(4 * B)
            lam_acc += lam
            beta_acc += beta
            gamma_acc += gamma
            if rec.due():
                k = t + 1
                rec.checkpoint(Iterate(lam, beta, gamma),
                               Iterate(lam_acc / k, beta_acc / k, gamma_acc / k), report=report)
        ref = Iterate(lam_acc / k_s, beta_acc / k_s, gamma_acc / k_s)
    trace = rec.finish(ref, ref, raw=Iterate(lam, beta, gamma), report=report)
    trace.meta.update(eta=cfg.eta, k0=cfg.k0, S=cfg.epochs_S, B=B, T=cfg.total_steps, report=report)
    return trace
