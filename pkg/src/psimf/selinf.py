"""Selective-inference core: orthogonal decomposition, perturbation map,
truncated-chi machinery, importance-sampled selective p-value, Wald baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import chi, norm

from .cluster import Partition, hclust2, kmeans2, partition_equal
from .embed import BasisSpec, embed_dataset
from .errors import EmptyTruncation, PartitionMismatch, PsimfError
from .simkit import LongitudinalDataset
from .whiten import WhitenedTensor, sample_covariance, whiten_dataset


@dataclass(frozen=True)
class TestConfig:
    """Monte-Carlo settings for the selective p-value."""

    __test__ = False  # keep pytest from collecting this as a test case

    mc_samples: int = 1000
    seed: int = 0
    clusterer: str = "kmeans2"           # "kmeans2" or "hclust2"
    linkage: str = "ward"                # used by hclust2 only
    min_effective_denominator: float = 1e-8

    def __post_init__(self):
        if self.mc_samples < 100:
            raise ValueError("mc_samples must be >= 100")
        if self.mc_samples < 1000:
            warnings.warn("mc_samples below 1000 gives a noisy p-value estimate")
        if self.min_effective_denominator <= 0:
            raise ValueError("min_effective_denominator must be positive")

    def cluster_fn(self) -> Callable:
        if self.clusterer == "kmeans2":
            return kmeans2
        if self.clusterer == "hclust2":
            linkage = self.linkage
            return lambda t: hclust2(t, linkage=linkage)
        raise ValueError(f"unknown clusterer {self.clusterer!r}")


@dataclass
class SelectiveTestReport:
    p_selective: float
    p_wald: float
    statistic: float
    scale: float                  # sqrt(1/|C1| + 1/|C2|)
    dof: int                      # m * q
    n_in_truncation: int
    denominator_weight: float
    effective_sample_size: float
    partition: Partition
    degenerate_direction: bool = False


def indicator_vector(partition: Partition, n: int) -> np.ndarray:
    """Signed membership contrast: 1/|C1| on C1, -1/|C2| on C2."""
    if partition.n != n:
        raise ValueError(f"partition covers {partition.n} subjects, expected {n}")
    nu = np.empty(n)
    nu[list(partition.c1)] = 1.0 / len(partition.c1)
    nu[list(partition.c2)] = -1.0 / len(partition.c2)
    return nu


def _cluster_mean_diff(data: np.ndarray, partition: Partition) -> np.ndarray:
    return data[list(partition.c1)].mean(axis=0) - data[list(partition.c2)].mean(axis=0)


def orthogonal_decompose(tensor: WhitenedTensor, partition: Partition):
    """Split a tensor into its part orthogonal to the cluster contrast and the
    (magnitude, direction) of the cluster-mean difference.

    The original tensor is recovered as
    projected + (magnitude / ||nu||^2) * outer(nu, direction).
    """
    data = tensor.data
    n = data.shape[0]
    nu = indicator_vector(partition, n)
    flat = data.reshape(n, -1)
    projected = flat - np.outer(nu, nu @ flat) / (nu @ nu)
    diff = _cluster_mean_diff(data, partition)
    magnitude = float(np.linalg.norm(diff))
    direction = diff / magnitude if magnitude > 0 else np.zeros_like(diff)
    return projected.reshape(data.shape), magnitude, direction


def perturb(
    projected: np.ndarray, partition: Partition, direction: np.ndarray, phi: float
) -> np.ndarray:
    """Move the projected tensor distance phi along the cluster contrast."""
    n = projected.shape[0]
    nu = indicator_vector(partition, n)
    shift = np.outer(nu, direction.ravel()) * (phi / (nu @ nu))
    return projected + shift.reshape(projected.shape)


def chi_density(x, dof: int, scale: float):
    """Density of scale * chi_dof (zero on negatives)."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.0, chi.pdf(x / scale, dof) / scale)


def chi_survival(x, dof: int, scale: float):
    """Survival function of scale * chi_dof."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 1.0, chi.sf(x / scale, dof))


def wald_p_value(whitened: WhitenedTensor, partition: Partition) -> float:
    """Naive (selection-ignoring) p-value under the whitened null law."""
    diff = _cluster_mean_diff(whitened.data, partition)
    stat = float(np.linalg.norm(diff))
    scale = np.sqrt(1.0 / len(partition.c1) + 1.0 / len(partition.c2))
    return float(chi_survival(stat, whitened.m * whitened.q, scale))


def selective_p_value(
    whitened: WhitenedTensor,
    partition: Partition,
    config: TestConfig,
    cluster_fn: Optional[Callable] = None,
) -> SelectiveTestReport:
    """Importance-sampled selective p-value conditioning on the clustering output.

    Proposal draws come from a normal centered at the observed cluster-mean
    distance with variance 1/|C1| + 1/|C2|; each non-negative draw is mapped
    through the perturbation and re-clustered, and membership in the truncation
    set is recorded. Weights are target-over-proposal density ratios, computed
    in log-space and rescaled by the largest weight inside the truncation set
    (the self-normalized estimator uses only those weights and is invariant to
    the rescaling). Deterministic given the config seed.
    """
    cluster_fn = cluster_fn or config.cluster_fn()
    if not partition_equal(cluster_fn(whitened), partition):
        raise PartitionMismatch("supplied partition is not the clusterer's output")

    projected, stat, direction = orthogonal_decompose(whitened, partition)
    c_sq = 1.0 / len(partition.c1) + 1.0 / len(partition.c2)
    scale = np.sqrt(c_sq)
    dof = whitened.m * whitened.q
    p_wald = float(chi_survival(stat, dof, scale))

    if stat == 0.0:
        # Zero cluster-mean difference: the perturbation map is constant.
        return SelectiveTestReport(
            p_selective=1.0,
            p_wald=p_wald,
            statistic=0.0,
            scale=scale,
            dof=dof,
            n_in_truncation=0,
            denominator_weight=0.0,
            effective_sample_size=0.0,
            partition=partition,
            degenerate_direction=True,
        )

    S = config.mc_samples
    gammas = np.array(
        [
            np.random.default_rng([config.seed, s]).normal(stat, scale)
            for s in range(S)
        ]
    )
    with np.errstate(divide="ignore"):
        log_w = np.where(
            gammas >= 0,
            chi.logpdf(np.maximum(gammas, 0.0) / scale, dof)
            - np.log(scale)
            - norm.logpdf(gammas, loc=stat, scale=scale),
            -np.inf,
        )
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise EmptyTruncation("all importance weights vanished")

    in_set = np.zeros(S, dtype=bool)
    for s in range(S):
        if not finite[s]:
            continue
        probe = cluster_fn(perturb(projected, partition, direction, gammas[s]))
        in_set[s] = partition_equal(probe, partition)
    if not np.any(in_set):
        raise EmptyTruncation("no proposal draws landed in the truncation set")

    weights = np.exp(log_w - log_w[in_set].max())
    denom = float(weights[in_set].sum())
    if denom < config.min_effective_denominator:
        raise EmptyTruncation(
            f"truncation-set weight {denom:.3e} below guard "
            f"{config.min_effective_denominator:.3e}; increase mc_samples"
        )
    numer = float(weights[in_set & (gammas >= stat)].sum())
    w_in = weights[in_set]
    ess = float(w_in.sum() ** 2 / (w_in**2).sum())

    return SelectiveTestReport(
        p_selective=min(max(numer / denom, 0.0), 1.0),
        p_wald=p_wald,
        statistic=stat,
        scale=scale,
        dof=dof,
        n_in_truncation=int(in_set.sum()),
        denominator_weight=denom,
        effective_sample_size=ess,
        partition=partition,
    )


def _stage(label: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, PsimfError):
                exc.stage = label
            return False

    return _StageContext()


def run_psimf(
    data: LongitudinalDataset, basis: BasisSpec, config: TestConfig
) -> SelectiveTestReport:
    """End-to-end test: embed, estimate covariance, whiten, cluster, selective p.

    Library errors are re-raised with a .stage attribute naming the pipeline
    stage that failed.
    """
    if data.n < 4:
        raise ValueError("need at least 4 subjects")
    with _stage("embedding"):
        tensor = embed_dataset(basis, data)
    with _stage("covariance"):
        cov = sample_covariance(tensor)
    with _stage("whitening"):
        whitened = whiten_dataset(tensor, cov)
    with _stage("clustering"):
        partition = config.cluster_fn()(whitened)
    with _stage("selective_p_value"):
        return selective_p_value(whitened, partition, config)
