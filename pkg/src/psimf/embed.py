"""Basis construction and ridge-regression embedding of functional records.

Each (subject, feature) record is mapped to a q-vector of ridge coefficients
against a fixed basis; the full dataset becomes an n x m x q tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, log
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import OrderTooLarge, SingularSystem
from .simkit import LongitudinalDataset

MAX_HERMITE_ORDER = 64


def hermite_physicist(order: int, x):
    """Physicist's Hermite polynomial H_order(x) by the three-term recurrence."""
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > MAX_HERMITE_ORDER:
        raise OrderTooLarge(f"order {order} exceeds guard {MAX_HERMITE_ORDER}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if order == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, order):
        h, h_prev = 2.0 * x * h - 2.0 * k * h_prev, h
    return h


def eigenfunction(order: int, x, rho: float):
    """Mercer eigenfunction of the Gaussian RBF kernel.

    phi_i(x) = H_i(x) exp(-rho/(1+rho) x^2) / sqrt(N_i) with
    N_i = 2^i i! sqrt((1-rho)/(1+rho)); the normalization is computed in
    log-space so large orders do not overflow.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    log_norm = order * log(2.0) + lgamma(order + 1) + 0.5 * log((1.0 - rho) / (1.0 + rho))
    envelope = np.exp(-rho / (1.0 + rho) * x**2 - 0.5 * log_norm)
    return hermite_physicist(order, x) * envelope


@dataclass(frozen=True)
class BasisSpec:
    """Truncated basis with ridge regularizer.

    The default variant is the Hermite/RBF eigenbasis; custom callables may be
    supplied instead (they are assumed Lipschitz on [0,1], not checked).
    """

    q: int
    rho: float = 0.99
    ridge: float = 0.01
    functions: Optional[Sequence[Callable]] = None  # custom basis, length q

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.functions is None and not (0 < self.rho < 1):
            raise ValueError("rho must lie in (0, 1)")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.functions is not None and len(self.functions) != self.q:
            raise ValueError("need exactly q custom functions")

    def evaluate(self, s: int, x) -> np.ndarray:
        if self.functions is not None:
            return np.asarray(self.functions[s](np.asarray(x, dtype=float)), dtype=float)
        return eigenfunction(s, x, self.rho)


@dataclass
class EmbeddedTensor:
    """n x m x q array of ridge coefficients."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError("embedded tensor must be 3-dimensional")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("embedded tensor has non-finite entries")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def q(self) -> int:
        return self.data.shape[2]


def design_matrix(basis: BasisSpec, times) -> np.ndarray:
    """q x r matrix with entry (s, k) = phi_s(times[k])."""
    times = np.asarray(times, dtype=float)
    return np.stack([basis.evaluate(s, times) for s in range(basis.q)])


def ridge_solve(phi: np.ndarray, values: np.ndarray, ridge: float) -> np.ndarray:
    """Solve (phi phi^T + ridge I) alpha = phi values by Cholesky."""
    gram = phi @ phi.T + ridge * np.eye(phi.shape[0])
    rhs = phi @ values
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(
            "ridge system singular (lambda=0 with r < q or collinear basis?)"
        ) from exc
    return scipy.linalg.cho_solve(factor, rhs)


def embed_record(basis: BasisSpec, times, values) -> np.ndarray:
    """Ridge coefficient q-vector for one record."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(times) != len(values) or len(times) == 0:
        raise ValueError("times and values must be equal-length and non-empty")
    return ridge_solve(design_matrix(basis, times), values, basis.ridge)


def embed_dataset(basis: BasisSpec, data: LongitudinalDataset) -> EmbeddedTensor:
    """Embed every record; slice [i, j, :] is embed_record on record (i, j)."""
    out = np.empty((data.n, data.m, basis.q))
    for i in range(data.n):
        for j in range(data.m):
            try:
                out[i, j] = embed_record(basis, data.times[i][j], data.values[i][j])
            except SingularSystem as exc:
                raise SingularSystem(f"record ({i}, {j}): {exc}") from exc
    return EmbeddedTensor(out)
