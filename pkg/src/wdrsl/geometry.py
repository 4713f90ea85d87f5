"""Euclidean projections onto the scaled second-order cone and the unit box."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Iterate


@dataclass(frozen=True)
class ConeSpec:
    ratio_c: float = 2.0

    def __post_init__(self):
        if not self.ratio_c > 0:
            raise ValueError("ratio_c must be positive")


def project_cone(lam: float, beta: np.ndarray, cone: ConeSpec) -> tuple[float, np.ndarray]:
    """Project (lam, beta) onto {c*||beta|| <= lam}."""
    beta = np.asarray(beta, dtype=np.float64)
    if not (math.isfinite(lam) and np.all(np.isfinite(beta))):
        raise DomainError("project_cone needs finite input")
    c = cone.ratio_c
    r = float(np.linalg.norm(beta))
    if c * r <= lam:
        return float(lam), beta.copy()
    if r == 0.0:
        return max(float(lam), 0.0), np.zeros_like(beta)
    if lam <= -r / c:
        return 0.0, np.zeros_like(beta)
    rho = (c * lam + r) / (1.0 + c * c)
    return c * rho, (rho / r) * beta


def project_box(gamma: np.ndarray) -> np.ndarray:
    return np.clip(gamma, -1.0, 1.0)


def project_joint(u: Iterate, cone: ConeSpec) -> Iterate:
    lam, beta = project_cone(u.lam, u.beta, cone)
    return Iterate(lam, beta, project_box(u.gamma))


def in_cone(lam: float, beta: np.ndarray, cone: ConeSpec, tol: float = 1e-12) -> bool:
    return cone.ratio_c * float(np.linalg.norm(beta)) <= lam + tol


def in_box(gamma: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.all(np.abs(gamma) <= 1.0 + tol))
