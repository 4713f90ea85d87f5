"""Saddle-point model of Wasserstein-robust generalized linear learning.

The objective is

    L(lam, beta, gamma) = lam*(delta - kappa) + mean_i Psi(<x_i, beta>)
                          + mean_i gamma_i * (y_i <x_i, beta> - lam*kappa)

minimized over the cone {(L+1)||beta|| <= lam} and maximized over the box
{||gamma||_inf <= 1}.  The operator F stacks (grad_(lam,beta) L, -grad_gamma L).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import DomainError, MissingReferenceError, ShapeError


class LinkKind(str, Enum):
    CANONICAL_LOGISTIC = "canonical-logistic"
    SYMMETRIC_LOGISTIC = "symmetric-logistic"


@dataclass(frozen=True)
class LinkFunction:
    kind: LinkKind = LinkKind.CANONICAL_LOGISTIC

    def __post_init__(self):
        object.__setattr__(self, "kind", LinkKind(self.kind))

    @property
    def lipschitz_L(self) -> float:
        return 1.0

    @property
    def smooth_ell(self) -> float:
        return 0.25 if self.kind is LinkKind.CANONICAL_LOGISTIC else 1.0

    def value(self, t):
        """Psi(t), overflow-free for any finite t."""
        if self.kind is LinkKind.CANONICAL_LOGISTIC:
            return np.logaddexp(0.0, t)
        return np.logaddexp(t, -t)

    def derivative(self, t):
        if self.kind is LinkKind.CANONICAL_LOGISTIC:
            return expit(t)
        return np.tanh(t)

    def conjugate(self, theta):
        """Convex conjugate Psi*(theta); +inf outside the closed domain."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.kind is LinkKind.CANONICAL_LOGISTIC:
            p = theta
        else:
            p = 0.5 * (1.0 + theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
            ent = ent + np.where(p < 1, (1 - p) * np.log(np.where(p < 1, 1 - p, 1.0)), 0.0)
        return np.where((p < 0) | (p > 1), np.inf, ent)


CANONICAL = LinkFunction(LinkKind.CANONICAL_LOGISTIC)
SYMMETRIC = LinkFunction(LinkKind.SYMMETRIC_LOGISTIC)


@dataclass(frozen=True)
class ProblemParams:
    delta: float = 0.1
    kappa: float = 1.0
    link: LinkFunction = CANONICAL

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")

    @property
    def cone_ratio(self) -> float:
        return self.link.lipschitz_L + 1.0

    @property
    def lipschitz_F(self) -> float:
        """Lipschitz constant ell + kappa + 1 shared by F and every F_i."""
        return self.link.smooth_ell + self.kappa + 1.0


@dataclass
class Iterate:
    lam: float
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.lam = float(self.lam)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)

    @classmethod
    def zeros(cls, d: int, n: int, lam: float = 0.0) -> "Iterate":
        return cls(lam, np.zeros(d), np.zeros(n))

    def copy(self) -> "Iterate":
        return Iterate(self.lam, self.beta.copy(), self.gamma.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.lam], self.beta, self.gamma))

    @classmethod
    def from_vector(cls, v: np.ndarray, d: int) -> "Iterate":
        return cls(v[0], v[1:1 + d].copy(), v[1 + d:].copy())

    def is_feasible(self, c: float, tol: float = 1e-10) -> bool:
        # rounding in the cone check grows with the magnitude of lam
        return (c * np.linalg.norm(self.beta) <= self.lam + tol * max(1.0, abs(self.lam))
                and bool(np.all(np.abs(self.gamma) <= 1.0 + tol)))


@dataclass
class OperatorValue:
    d_lambda: float
    d_beta: np.ndarray
    d_gamma: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.d_lambda], self.d_beta, self.d_gamma))


@dataclass
class ComponentValue:
    """F_i(u) in sparse form.

    The beta block is ``beta_coef * x_i`` and the gamma block is zero except
    ``d_gamma_i`` at ``index``.
    """
    index: int
    d_lambda: float
    beta_coef: float
    d_gamma_i: float
    cols: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)

    def to_dense(self, d: int, n: int) -> OperatorValue:
        d_beta = np.zeros(d)
        d_beta[self.cols] = self.beta_coef * self.vals
        d_gamma = np.zeros(n)
        d_gamma[self.index] = self.d_gamma_i
        return OperatorValue(self.d_lambda, d_beta, d_gamma)


# --------------------------------------------------------------------------

def _check_finite(t):
    if not np.all(np.isfinite(t)):
        raise DomainError("link function argument must be finite")


def psi(link: LinkFunction, t):
    _check_finite(t)
    return link.value(t)


def psi_prime(link: LinkFunction, t):
    _check_finite(t)
    return link.derivative(t)


def _check_shapes(ds: Dataset, beta, gamma=None):
    if np.shape(beta) != (ds.d,):
        raise ShapeError(f"beta has shape {np.shape(beta)}, expected ({ds.d},)")
    if gamma is not None and np.shape(gamma) != (ds.n,):
        raise ShapeError(f"gamma has shape {np.shape(gamma)}, expected ({ds.n},)")


def margins(ds: Dataset, beta: np.ndarray) -> np.ndarray:
    """<x_i, beta> for every row."""
    return ds.X @ beta


def objective_L(u: Iterate, ds: Dataset, p: ProblemParams) -> float:
    _check_shapes(ds, u.beta, u.gamma)
    t = margins(ds, u.beta)
    return float(u.lam * (p.delta - p.kappa)
                 + np.mean(p.link.value(t))
                 + np.mean(u.gamma * (ds.y * t - u.lam * p.kappa)))


def full_operator(u: Iterate, ds: Dataset, p: ProblemParams) -> OperatorValue:
    _check_shapes(ds, u.beta, u.gamma)
    n = ds.n
    t = margins(ds, u.beta)
    d_lambda = p.delta - p.kappa * (1.0 + np.mean(u.gamma))
    coef = p.link.derivative(t) + u.gamma * ds.y
    d_beta = (ds.X.T @ coef) / n
    d_gamma = -(ds.y * t - u.lam * p.kappa) / n
    return OperatorValue(float(d_lambda), d_beta, d_gamma)


def component_operator(u: Iterate, i: int, ds: Dataset, p: ProblemParams) -> ComponentValue:
    """F_i(u); the gamma entry carries no 1/n factor. Cost O(nnz(x_i))."""
    if not 0 <= i < ds.n:
        raise IndexError(f"component index {i} out of range [0, {ds.n})")
    cols, vals = ds.row(i)
    t = float(vals @ u.beta[cols])
    g = float(u.gamma[i])
    y = float(ds.y[i])
    return ComponentValue(
        index=i,
        d_lambda=p.delta - p.kappa * (1.0 + g),
        beta_coef=float(p.link.derivative(t)) + g * y,
        d_gamma_i=-(y * t - u.lam * p.kappa),
        cols=cols,
        vals=vals,
    )


def best_response_gamma(lam: float, beta: np.ndarray, ds: Dataset, p: ProblemParams) -> np.ndarray:
    """Maximizer of L(lam, beta, .) over the box; ties map to 0."""
    _check_shapes(ds, beta)
    return np.sign(ds.y * margins(ds, beta) - lam * p.kappa)


def convex_objective_f(lam: float, beta: np.ndarray, ds: Dataset, p: ProblemParams) -> float:
    """Nonsmooth convex primal objective; equals max_gamma L at fixed (lam, beta)."""
    _check_shapes(ds, beta)
    t = margins(ds, beta)
    yt = ds.y * t
    hinge = np.maximum(0.0, 2.0 * yt - 2.0 * lam * p.kappa)
    return float(lam * p.delta + np.mean(p.link.value(t) - yt) + np.mean(hinge))


def convex_subgradient(lam: float, beta: np.ndarray, ds: Dataset, p: ProblemParams) -> tuple[float, np.ndarray]:
    """A subgradient of convex_objective_f; kinks of max{0, .} take the 0 branch."""
    _check_shapes(ds, beta)
    t = margins(ds, beta)
    active = (ds.y * t - lam * p.kappa) > 0.0
    g_lam = p.delta - 2.0 * p.kappa * np.mean(active)
    coef = p.link.derivative(t) - ds.y + 2.0 * ds.y * active
    return float(g_lam), (ds.X.T @ coef) / ds.n


def component_subgradient(lam: float, beta: np.ndarray, i: int, ds: Dataset, p: ProblemParams):
    """Subgradient of the i-th summand of f; returns (g_lam, coef, cols, vals), g_beta = coef * x_i."""
    cols, vals = ds.row(i)
    t = float(vals @ beta[cols])
    y = float(ds.y[i])
    active = (y * t - lam * p.kappa) > 0.0
    g_lam = p.delta - (2.0 * p.kappa if active else 0.0)
    coef = float(p.link.derivative(t)) - y + (2.0 * y if active else 0.0)
    return g_lam, coef, cols, vals


def duality_gap(u: Iterate, ref, ds: Dataset, p: ProblemParams) -> float:
    """L(lam, beta, gamma*) - L(lam*, beta*, gamma) against a reference saddle point."""
    if ref is None:
        raise MissingReferenceError("duality_gap needs a reference solution")
    hi = objective_L(Iterate(u.lam, u.beta, ref.gamma_star), ds, p)
    lo = objective_L(Iterate(ref.lambda_star, ref.beta_star, u.gamma), ds, p)
    return hi - lo

