"""Wasserstein distributionally robust supervised learning via monotone saddle-point solvers."""
from .data import Dataset, SynthSpec, load_libsvm, normalize, parse_libsvm, synth_generate
from .errors import DivergenceError, DomainError, MissingReferenceError, ParseError, ShapeError
from .eval import ReferenceSolution, compute_reference, robust_loss_w, suboptimality, test_metrics
from .geometry import ConeSpec, project_box, project_cone
from .model import (CANONICAL, SYMMETRIC, Iterate, LinkFunction, LinkKind, ProblemParams,
                    best_response_gamma, component_operator, convex_objective_f, duality_gap,
                    full_operator, objective_L)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SynthSpec", "load_libsvm", "normalize", "parse_libsvm", "synth_generate",
    "DivergenceError", "DomainError", "MissingReferenceError", "ParseError", "ShapeError",
    "ReferenceSolution", "compute_reference", "robust_loss_w", "suboptimality", "test_metrics",
    "ConeSpec", "project_box", "project_cone",
    "CANONICAL", "SYMMETRIC", "Iterate", "LinkFunction", "LinkKind", "ProblemParams",
    "best_response_gamma", "component_operator", "convex_objective_f", "duality_gap",
    "full_operator", "objective_L",
]
