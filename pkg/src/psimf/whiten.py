"""Covariance estimation, inverse square roots, whitening, and covariance oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .embed import BasisSpec, EmbeddedTensor, design_matrix
from .errors import (
    DegenerateCovariance,
    DimensionMismatch,
    NotSymmetric,
    SingularGram,
)
from .simkit import KernelSpec, build_covariance_matrix

# Relative eigenvalue floor for inverse square roots. Floored directions are
# retained so whitening stays full-dimensional.
EIGEN_FLOOR_REL = 1e-10


@dataclass
class CovarianceEstimate:
    """(mq) x (mq) covariance with its inverse square root.

    Vectorization order is feature-major (feature outer, basis inner), i.e. a
    row-major ravel of each m x q slice.
    """

    matrix: np.ndarray
    inv_sqrt: np.ndarray
    eigen_floor_applied: bool
    m: int
    q: int


@dataclass
class WhitenedTensor:
    """n x m x q tensor after slice-wise whitening."""

    data: np.ndarray
    covariance: Optional[CovarianceEstimate] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("whitened tensor has non-finite entries")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def q(self) -> int:
        return self.data.shape[2]


def _inv_sqrt_eigh(matrix: np.ndarray):
    evals, evecs = np.linalg.eigh(matrix)
    floor = max(EIGEN_FLOOR_REL * max(evals.max(), 0.0), 1e-300)
    floored = np.maximum(evals, floor)
    inv_sqrt = (evecs / np.sqrt(floored)) @ evecs.T
    return inv_sqrt, bool(np.any(evals < floor))


def inv_sqrt_psd(matrix: np.ndarray, sym_tol: float = 1e-8) -> np.ndarray:
    """Symmetric inverse square root of a PSD matrix with eigenvalue flooring."""
    matrix = np.asarray(matrix, dtype=float)
    scale = max(np.abs(matrix).max(), 1e-300)
    if np.abs(matrix - matrix.T).max() > sym_tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    inv_sqrt, _ = _inv_sqrt_eigh((matrix + matrix.T) / 2.0)
    return inv_sqrt


def sample_covariance(tensor: EmbeddedTensor) -> CovarianceEstimate:
    """Unbiased sample covariance of the n vectorized slices."""
    if tensor.n < 2:
        raise ValueError("need n >= 2 slices")
    flat = tensor.data.reshape(tensor.n, -1)
    if np.all(flat == flat[0]):
        raise DegenerateCovariance("all slices identical; whitening impossible")
    centered = flat - flat.mean(axis=0)
    cov = centered.T @ centered / (tensor.n - 1)
    cov = (cov + cov.T) / 2.0
    inv_sqrt, floored = _inv_sqrt_eigh(cov)
    return CovarianceEstimate(cov, inv_sqrt, floored, tensor.m, tensor.q)


def whiten_dataset(tensor: EmbeddedTensor, cov: CovarianceEstimate) -> WhitenedTensor:
    """Apply the inverse square root to each vectorized slice."""
    if (tensor.m, tensor.q) != (cov.m, cov.q):
        raise DimensionMismatch(
            f"tensor is {tensor.m}x{tensor.q}, covariance for {cov.m}x{cov.q}"
        )
    flat = tensor.data.reshape(tensor.n, -1)
    out = flat @ cov.inv_sqrt.T
    return WhitenedTensor(out.reshape(tensor.data.shape), cov)


# ---------------------------------------------------------------------------
# Known-kernel oracles
# ---------------------------------------------------------------------------


def oracle_embedding_covariance(
    kernel: KernelSpec,
    basis: BasisSpec,
    times_per_feature: Sequence[np.ndarray],
    noise_var: Sequence[float],
    cross_kernel: Optional[KernelSpec] = None,
    mean_per_feature: Optional[Sequence[np.ndarray]] = None,
):
    """Exact finite-sample covariance of a vectorized embedded slice.

    Builds the per-feature ridge maps D_j = (Phi_j Phi_j^T + ridge I)^-1 Phi_j,
    assembles the block kernel-plus-noise covariance over the pooled times, and
    returns D Sigma D^T. If mean_per_feature gives the mean values mu_j(t) at
    each feature's times, the embedded mean vector is returned alongside.
    """
    m = len(times_per_feature)
    lengths = [len(t) for t in times_per_feature]
    offs = np.concatenate([[0], np.cumsum(lengths)])
    total = offs[-1]
    q = basis.q

    d_blocks = []
    for j in range(m):
        phi = design_matrix(basis, times_per_feature[j])
        gram = phi @ phi.T + basis.ridge * np.eye(q)
        d_blocks.append(np.linalg.solve(gram, phi))

    sigma = np.zeros((total, total))
    for a in range(m):
        sa = slice(offs[a], offs[a + 1])
        sigma[sa, sa] = build_covariance_matrix(
            kernel, times_per_feature[a], times_per_feature[a]
        ) + float(noise_var[a]) * np.eye(lengths[a])
        if cross_kernel is not None:
            for b in range(a + 1, m):
                sb = slice(offs[b], offs[b + 1])
                block = build_covariance_matrix(
                    cross_kernel, times_per_feature[a], times_per_feature[b]
                )
                sigma[sa, sb] = block
                sigma[sb, sa] = block.T

    d_full = np.zeros((m * q, total))
    for j in range(m):
        d_full[j * q : (j + 1) * q, offs[j] : offs[j + 1]] = d_blocks[j]
    cov = d_full @ sigma @ d_full.T
    cov = (cov + cov.T) / 2.0

    if mean_per_feature is None:
        return cov
    beta = np.concatenate(
        [d_blocks[j] @ np.asarray(mean_per_feature[j], dtype=float) for j in range(m)]
    )
    return cov, beta


def compute_population_gram_and_asymptotic_cov(
    kernel: KernelSpec,
    basis: BasisSpec,
    noise_var: Sequence[float],
    quadrature_points: int = 256,
    cross_kernel: Optional[KernelSpec] = None,
    mean_functions: Optional[Sequence[Callable]] = None,
):
    """Population Gram matrix and asymptotic slice covariance by quadrature.

    K[s1,s2] = int phi_s1 phi_s2 dt on [0,1] (composite trapezoid); the block
    (a,b) of the asymptotic covariance is
    K^-1 (int int phi_s1(t1) phi_s2(t2) (R_ab(t1,t2) + 1{a=b} sigma_a^2)) K^-1.
    The diagonal-noise term is integrated verbatim as printed, i.e. it
    contributes sigma_a^2 (int phi_s1)(int phi_s2); the finite-sample oracle is
    the ground truth where the two disagree. If mean_functions are supplied,
    returns the asymptotic embedded means beta_j = K^-1 int phi_s mu_j dt.
    """
    if quadrature_points < 64:
        raise ValueError("need at least 64 quadrature points")
    noise_var = np.atleast_1d(np.asarray(noise_var, dtype=float))
    m = noise_var.size
    grid = np.linspace(0.0, 1.0, quadrature_points)
    phi = design_matrix(basis, grid)  # q x g
    wts = np.full(quadrature_points, grid[1] - grid[0])
    wts[0] /= 2.0
    wts[-1] /= 2.0
    phi_w = phi * wts

    gram = phi_w @ phi.T
    gram = (gram + gram.T) / 2.0
    if np.linalg.cond(gram) > 1e12:
        raise SingularGram("population Gram matrix numerically singular")
    gram_inv = np.linalg.inv(gram)

    q = basis.q
    cov = np.zeros((m * q, m * q))
    phi_int = phi_w.sum(axis=1)  # int phi_s dt
    for a in range(m):
        for b in range(a, m):
            if a == b:
                r_grid = build_covariance_matrix(kernel, grid, grid)
            elif cross_kernel is not None:
                r_grid = build_covariance_matrix(cross_kernel, grid, grid)
            else:
                r_grid = np.zeros((quadrature_points, quadrature_points))
            inner = phi_w @ r_grid @ phi_w.T
            if a == b:
                inner = inner + noise_var[a] * np.outer(phi_int, phi_int)
            block = gram_inv @ inner @ gram_inv
            cov[a * q : (a + 1) * q, b * q : (b + 1) * q] = block
            cov[b * q : (b + 1) * q, a * q : (a + 1) * q] = block.T

    if mean_functions is None:
        return gram, cov
    betas = []
    for j in range(m):
        mu_grid = np.asarray(mean_functions[j](grid), dtype=float)
        betas.append(gram_inv @ (phi_w @ mu_grid))
    return gram, cov, np.concatenate(betas)
