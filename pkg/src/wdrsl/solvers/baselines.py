"""Baselines: (extra)gradient descent ascent, their stochastic versions, and
(stochastic) projected subgradient descent on the convex primal objective."""
from __future__ import annotations

import math

import numpy as np

from ..data import Dataset
from ..geometry import ConeSpec, project_cone
from ..model import (Iterate, ProblemParams, best_response_gamma, component_subgradient,
                     convex_subgradient, full_operator)
from .trace import EvalHooks, Recorder, SolverTrace, default_start, make_rng


def _start(ds, p, u0):
    cone = ConeSpec(p.cone_ratio)
    u = u0.copy() if u0 is not None else default_start(ds, p)
    lam, beta = project_cone(u.lam, u.beta, cone)
    return cone, Iterate(lam, beta, np.clip(u.gamma, -1.0, 1.0))


def _step(u: Iterate, F, eta: float, cone: ConeSpec) -> Iterate:
    lam, beta = project_cone(u.lam - eta * F.d_lambda, u.beta - eta * F.d_beta, cone)
    return Iterate(lam, beta, np.clip(u.gamma - eta * F.d_gamma, -1.0, 1.0))


def _tick(rec: Recorder, count: int) -> None:
    rec.add(count)
    rec.epoch = rec.evals // rec.n


def gda_run(ds: Dataset, p: ProblemParams, eta: float, iters: int, hooks: EvalHooks | None = None,
            u0: Iterate | None = None) -> SolverTrace:
    """u <- P(u - eta F(u))."""
    cone, u = _start(ds, p, u0)
    rec = Recorder("GDA", 0, ds, p, hooks)
    rec.checkpoint(u)
    for _ in range(iters):
        u = _step(u, full_operator(u, ds, p), eta, cone)
        _tick(rec, ds.n)
        rec.checkpoint(u)
        if not rec.budget_left():
            break
    return rec.finish(u, None)


def extragda_run(ds: Dataset, p: ProblemParams, eta: float, iters: int, hooks: EvalHooks | None = None,
                 u0: Iterate | None = None) -> SolverTrace:
    """u_bar = P(u - eta F(u)); u <- P(u - eta F(u_bar))."""
    cone, u = _start(ds, p, u0)
    rec = Recorder("ExtraGDA", 0, ds, p, hooks)
    rec.checkpoint(u)
    for _ in range(iters):
        u_bar = _step(u, full_operator(u, ds, p), eta, cone)
        u = _step(u, full_operator(u_bar, ds, p), eta, cone)
        _tick(rec, 2 * ds.n)
        rec.checkpoint(u)
        if not rec.budget_left():
            break
    return rec.finish(u, None)


# --------------------------------------------------------------------------
# stochastic descent ascent
# --------------------------------------------------------------------------

class _BatchOp:
    """(1/B) sum_{i in I} F_i(u), gamma part kept sparse on the batch indices."""
    __slots__ = ("d_lambda", "d_beta", "idx", "g_vals")

    def __init__(self, d_lambda, d_beta, idx, g_vals):
        self.d_lambda = d_lambda
        self.d_beta = d_beta
        self.idx = idx
        self.g_vals = g_vals


def batch_operator(u: Iterate, idx: np.ndarray, ds: Dataset, p: ProblemParams) -> _BatchOp:
    B = len(idx)
    XI = ds.X[idx]
    t = XI @ u.beta
    g = u.gamma[idx]
    y = ds.y[idx]
    d_lambda = p.delta - p.kappa * (1.0 + np.sum(g) / B)
    d_beta = (XI.T @ (p.link.derivative(t) + g * y)) / B
    g_vals = -(y * t - u.lam * p.kappa) / B
    return _BatchOp(float(d_lambda), d_beta, idx, g_vals)


def _batch_step(u: Iterate, op: _BatchOp | None, eta: float, cone: ConeSpec) -> Iterate:
    if op is None:
        return u.copy()
    lam, beta = project_cone(u.lam - eta * op.d_lambda, u.beta - eta * op.d_beta, cone)
    gamma = u.gamma.copy()
    np.add.at(gamma, op.idx, -eta * op.g_vals)
    gamma[op.idx] = np.clip(gamma[op.idx], -1.0, 1.0)
    return Iterate(lam, beta, gamma)


def sgda_run(ds: Dataset, p: ProblemParams, eta0: float, iters: int, batch: int = 1, seed: int = 0,
             hooks: EvalHooks | None = None, u0: Iterate | None = None) -> SolverTrace:
    """Stochastic GDA with eta_t = eta0 / sqrt(t). With batch == n the full index set is used."""
    cone, u = _start(ds, p, u0)
    rng = make_rng(seed)
    rec = Recorder("SGDA", seed, ds, p, hooks)
    rec.checkpoint(u)
    everything = np.arange(ds.n)
    for t in range(1, iters + 1):
        idx = everything if batch == ds.n else rng.integers(0, ds.n, size=batch)
        u = _batch_step(u, batch_operator(u, idx, ds, p), eta0 / math.sqrt(t), cone)
        _tick(rec, batch)
        if rec.due():
            rec.checkpoint(u)
        if not rec.budget_left():
            break
    return rec.finish(u, None)


def extrasgda_run(ds: Dataset, p: ProblemParams, eta0: float, iters: int, batch: int = 1, seed: int = 0,
                  hooks: EvalHooks | None = None, u0: Iterate | None = None) -> SolverTrace:
    """Single-call stochastic extragradient: extrapolate with the previous estimate."""
    cone, u = _start(ds, p, u0)
    rng = make_rng(seed)
    rec = Recorder("ExtraSGDA", seed, ds, p, hooks)
    rec.checkpoint(u)
    prev = None
    everything = np.arange(ds.n)
    for t in range(1, iters + 1):
        eta = eta0 / math.sqrt(t)
        u_bar = _batch_step(u, prev, eta, cone)
        idx = everything if batch == ds.n else rng.integers(0, ds.n, size=batch)
        prev = batch_operator(u_bar, idx, ds, p)
        u = _batch_step(u, prev, eta, cone)
        _tick(rec, batch)
        if rec.due():
            rec.checkpoint(u)
        if not rec.budget_left():
            break
    return rec.finish(u, None)


# --------------------------------------------------------------------------
# subgradient methods on the primal objective
# --------------------------------------------------------------------------

def _primal(lam, beta):
    return Iterate(lam, beta, np.zeros(0))


def _subgradient_loop(name, ds, p, eta0, iters, seed, hooks, u0, draw, cost):
    cone, u = _start(ds, p, u0)
    lam, beta = u.lam, u.beta
    rec = Recorder(name, seed, ds, p, hooks)
    lam_sum, beta_sum = 0.0, np.zeros(ds.d)
    rec.checkpoint(_primal(lam, beta), _primal(lam, beta), report="avg")
    for t in range(1, iters + 1):
        g_lam, g_beta = draw(lam, beta)
        eta = eta0 / math.sqrt(t)
        lam, beta = project_cone(lam - eta * g_lam, beta - eta * g_beta, cone)
        lam_sum += lam
        beta_sum += beta
        _tick(rec, cost)
        if rec.due():
            rec.checkpoint(_primal(lam, beta), _primal(lam_sum / t, beta_sum / t), report="avg")
        if not rec.budget_left():
            break
    k = max(t, 1) if iters > 0 else 1
    avg = (lam_sum / k, beta_sum / k) if iters > 0 else (lam, beta)
    avg_it = Iterate(avg[0], avg[1], best_response_gamma(avg[0], avg[1], ds, p))
    last = Iterate(lam, beta, best_response_gamma(lam, beta, ds, p))
    rec.checkpoint(_primal(lam, beta), _primal(*avg), report="avg", force=True)
    rec.trace.final_iterate = last
    rec.trace.averaged_iterate = avg_it
    return rec.trace


def subgrad_run(ds: Dataset, p: ProblemParams, eta0: float, iters: int, hooks: EvalHooks | None = None,
                u0: Iterate | None = None) -> SolverTrace:
    """Projected subgradient descent on f over the cone, eta_t = eta0/sqrt(t); reports the running average."""
    return _subgradient_loop("SG", ds, p, eta0, iters, 0, hooks, u0,
                             lambda lam, beta: convex_subgradient(lam, beta, ds, p), ds.n)


def ssg_run(ds: Dataset, p: ProblemParams, eta0: float, iters: int, batch: int = 1, seed: int = 0,
            hooks: EvalHooks | None = None, u0: Iterate | None = None) -> SolverTrace:
    """Stochastic projected subgradient with minibatches drawn with replacement."""
    rng = make_rng(seed)

    def draw(lam, beta):
        idx = rng.integers(0, ds.n, size=batch)
        return minibatch_subgradient(lam, beta, idx, ds, p)

    return _subgradient_loop("SSG", ds, p, eta0, iters, seed, hooks, u0, draw, batch)


def minibatch_subgradient(lam, beta, idx, ds: Dataset, p: ProblemParams):
    XI = ds.X[idx]
    t = XI @ beta
    y = ds.y[idx]
    active = (y * t - lam * p.kappa) > 0.0
    g_lam = p.delta - 2.0 * p.kappa * np.mean(active)
    coef = p.link.derivative(t) - y + 2.0 * y * active
    return float(g_lam), (XI.T @ coef) / len(idx)


__all__ = ["gda_run", "extragda_run", "sgda_run", "extrasgda_run", "subgrad_run", "ssg_run",
           "batch_operator", "minibatch_subgradient", "component_subgradient"]
