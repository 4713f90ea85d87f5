"""Datasets: LIBSVM parsing, synthetic generation, normalization and splitting.

Rows are held in a CSR matrix so that a single sample costs O(nnz) to touch.
Labels are floats in {-1, +1}.
"""
from __future__ import annotations

import io
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

NORM_SLACK = 1e-12
MAX_INDEX = 2**31 - 2  # 1-based; keeps 0-based indices within int32


@dataclass
class RawExample:
    label: float
    features: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class Dataset:
    X: sp.csr_matrix
    y: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.X = sp.csr_matrix(self.X, dtype=np.float64)
        self.X.sort_indices()
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("labels must have one entry per row")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("labels must be exactly -1 or +1")
        self._row_norms = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def row_norms(self) -> np.ndarray:
        if self._row_norms is None:
            sq = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()
            self._row_norms = np.sqrt(sq)
        return self._row_norms

    @property
    def max_row_norm(self) -> float:
        return float(self.row_norms.max()) if self.n else 0.0

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i``."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi], self.X.data[lo:hi]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.scale)

    def equals(self, other: "Dataset") -> bool:
        if self.X.shape != other.X.shape or self.scale != other.scale:
            return False
        diff = self.X != other.X
        return diff.nnz == 0 and np.array_equal(self.y, other.y)


@dataclass
class SynthSpec:
    n: int
    d: int
    noise_var: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("SynthSpec needs n >= 1 and d >= 1")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")


# --------------------------------------------------------------------------
# LIBSVM text format
# --------------------------------------------------------------------------

_INDEX = re.compile(r"[0-9]+", re.ASCII)
_NUMBER = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?", re.ASCII)


def _parse_label(tok: str, lineno: int) -> float:
    if not _NUMBER.fullmatch(tok):
        raise ParseError(f"bad label {tok!r}", lineno)
    v = float(tok)
    if v == 1.0:
        return 1.0
    if v == -1.0:
        return -1.0
    if v == 0.0:
        warnings.warn(f"line {lineno}: label 0 remapped to -1", stacklevel=3)
        return -1.0
    raise ParseError(f"label {tok!r} not in {{+1, -1, 0}}", lineno)


def parse_line(line: str, lineno: int = 1) -> RawExample | None:
    """Parse one line; returns None for blank/comment-only lines."""
    line = line.split("#", 1)[0].strip()
    if not line:
        return None
    toks = line.split()
    label = _parse_label(toks[0], lineno)
    feats = []
    last = 0
    for tok in toks[1:]:
        key, sep, val = tok.partition(":")
        if not sep:
            raise ParseError(f"feature token {tok!r} lacks ':'", lineno)
        if not (_INDEX.fullmatch(key) and _NUMBER.fullmatch(val)):
            raise ParseError(f"malformed feature token {tok!r}", lineno)
        idx = int(key)
        x = float(val)
        if idx < 1:
            raise ParseError(f"feature index {idx} must be >= 1", lineno)
        if idx > MAX_INDEX:
            raise ParseError(f"feature index {idx} exceeds {MAX_INDEX}", lineno)
        if not math.isfinite(x):
            raise ParseError(f"non-finite feature value {val!r}", lineno)
        if idx <= last:
            raise ParseError(f"feature indices not strictly increasing at {idx}", lineno)
        last = idx
        feats.append((idx - 1, x))
    return RawExample(label, feats)


def parse_libsvm(stream: TextIO | Iterable[str] | str) -> list[RawExample]:
    """Parse LIBSVM text. Indices are converted to 0-based."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out = []
    for lineno, line in enumerate(stream, start=1):
        ex = parse_line(line, lineno)
        if ex is not None:
            out.append(ex)
    return out


def format_example(ex: RawExample) -> str:
    label = "+1" if ex.label > 0 else "-1"
    parts = [label] + [f"{j + 1}:{v!r}" for j, v in ex.features]
    return " ".join(parts)


def serialize_libsvm(examples: Iterable[RawExample]) -> str:
    return "".join(format_example(ex) + "\n" for ex in examples)


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------

def _rescale(ds: Dataset) -> Dataset:
    m = ds.max_row_norm
    if m <= 1.0 + NORM_SLACK:
        return ds
    X = ds.X * (1.0 / m)
    out = Dataset(X, ds.y, ds.scale / m)
    # x * (1/m) can round one ulp above 1
    if out.max_row_norm > 1.0 + NORM_SLACK:
        raise AssertionError("normalization failed to bound row norms")
    return out


def normalize(examples: list[RawExample] | Dataset, d: int | None = None) -> Dataset:
    """Scale all rows by one global factor 1/max(1, max_i ||x_i||).

    Accepts parsed examples or an existing Dataset (idempotent on the latter).
    """
    if isinstance(examples, Dataset):
        return _rescale(examples)
    if not examples:
        raise ValueError("cannot normalize an empty example list")
    max_idx = max((ex.features[-1][0] for ex in examples if ex.features), default=-1)
    ncols = max_idx + 1 if d is None else d
    if ncols <= max_idx:
        raise ValueError(f"d={ncols} too small for feature index {max_idx}")
    ncols = max(ncols, 1)
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for ex in examples:
        for j, v in ex.features:
            indices.append(j)
            values.append(v)
        indptr.append(len(indices))
    X = sp.csr_matrix(
        (np.array(values, dtype=np.float64), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(examples), ncols),
    )
    y = np.array([ex.label for ex in examples], dtype=np.float64)
    return _rescale(Dataset(X, y, 1.0))


def to_examples(ds: Dataset) -> list[RawExample]:
    out = []
    for i in range(ds.n):
        idx, vals = ds.row(i)
        out.append(RawExample(float(ds.y[i]), [(int(j), float(v)) for j, v in zip(idx, vals)]))
    return out


# --------------------------------------------------------------------------
# Dataset cache file: "n d scale" header, then canonical LIBSVM lines
# --------------------------------------------------------------------------

def write_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{ds.n} {ds.d} {ds.scale!r}\n")
        fh.write(serialize_libsvm(to_examples(ds)))


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParseError("dataset header must be 'n d scale'", 1)
        try:
            n, d, scale = int(header[0]), int(header[1]), float(header[2])
        except ValueError:
            raise ParseError("dataset header must be 'n d scale'", 1) from None
        examples = []
        for lineno, line in enumerate(fh, start=2):
            ex = parse_line(line, lineno)
            if ex is not None:
                examples.append(ex)
    if len(examples) != n:
        raise ParseError(f"header says n={n} but file holds {len(examples)} rows")
    ds = normalize(examples, d=d)
    # rows were stored already normalized
    return Dataset(ds.X, ds.y, scale)


def load_libsvm(path, d: int | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return normalize(parse_libsvm(fh), d=d)


# --------------------------------------------------------------------------
# Synthetic data and splitting
# --------------------------------------------------------------------------

def synth_generate(spec: SynthSpec, true_beta: np.ndarray | None = None) -> tuple[Dataset, np.ndarray]:
    """Gaussian design with labels sign(<x, beta*> + eps), eps ~ N(0, noise_var).

    ``true_beta`` overrides the drawn coefficient vector (the draw still
    happens so the remaining stream is unchanged).
    """
    rng = np.random.default_rng(spec.seed)
    beta_star = rng.standard_normal(spec.d)
    if true_beta is not None:
        beta_star = np.asarray(true_beta, dtype=np.float64).copy()
    X = rng.standard_normal((spec.n, spec.d))
    eps = rng.standard_normal(spec.n) * math.sqrt(spec.noise_var)
    margin = X @ beta_star + eps
    y = np.where(margin >= 0.0, 1.0, -1.0)
    return normalize(Dataset(X, y, 1.0)), beta_star


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return perm[n_test:], perm[:n_test]


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds.n, test_fraction, seed)
    return ds.subset(train_idx), ds.subset(test_idx)
