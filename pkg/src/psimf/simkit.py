"""Synthetic data generation: Gaussian-process model, kernels, and misspecified processes.

All kernels and processes live on the time domain [0, 1]. Sampling is a pure
function of the supplied seed / RNG stream: per-subject streams are derived
from (seed, subject index), so subject i's data does not depend on n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import FactorizationFailure

# Relative threshold on the most negative eigenvalue before PSD clipping is
# considered a repair rather than a cover-up for a broken kernel.
CLIP_TOL = 1e-4


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance kernel on [0,1]^2.

    variant is one of "rational_quadratic", "periodic",
    "truncated_local_periodic", "rbf", "tabulated_grid".
    """

    variant: str
    length_scale: float = 1.0        # rational_quadratic
    rho: float = 0.99                # rbf
    grid_values: Optional[np.ndarray] = None  # tabulated_grid, on a uniform grid

    def __post_init__(self):
        if self.variant == "rational_quadratic" and self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if self.variant == "rbf" and not (0 < self.rho < 1):
            raise ValueError("rbf rho must lie in (0, 1)")
        if self.variant == "tabulated_grid":
            g = np.asarray(self.grid_values, dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
                raise ValueError("tabulated kernel needs a square grid of size >= 2")
            object.__setattr__(self, "grid_values", g)

    def __call__(self, x, y):
        """Evaluate the kernel on broadcastable arrays of times."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x - y
        if self.variant == "rational_quadratic":
            return (1.0 + (d / self.length_scale) ** 2) ** -0.5
        if self.variant == "periodic":
            return np.exp(-8.0 * np.sin(2.0 * np.pi * np.abs(d)) ** 2)
        if self.variant == "truncated_local_periodic":
            ad = np.abs(d)
            mid = (ad > 1.0 / 3.0) & (ad < 2.0 / 3.0)
            periodic = np.exp(-8.0 * np.sin(2.0 * np.pi * ad) ** 2) * np.exp(-2.0 * d**2)
            return np.where(mid, periodic, 0.01)
        if self.variant == "rbf":
            r = self.rho
            return np.exp(-r / (1.0 - r**2) * d**2)
        if self.variant == "tabulated_grid":
            return self._interp_grid(x, y)
        raise ValueError(f"unknown kernel variant {self.variant!r}")

    def _interp_grid(self, x, y):
        g = self.grid_values
        n = g.shape[0]
        xi = np.clip(np.asarray(x, dtype=float), 0.0, 1.0) * (n - 1)
        yi = np.clip(np.asarray(y, dtype=float), 0.0, 1.0) * (n - 1)
        x0 = np.minimum(np.floor(xi).astype(int), n - 2)
        y0 = np.minimum(np.floor(yi).astype(int), n - 2)
        fx = xi - x0
        fy = yi - y0
        return (
            g[x0, y0] * (1 - fx) * (1 - fy)
            + g[x0 + 1, y0] * fx * (1 - fy)
            + g[x0, y0 + 1] * (1 - fx) * fy
            + g[x0 + 1, y0 + 1] * fx * fy
        )


def zero_kernel() -> KernelSpec:
    """Degenerate kernel (identically zero covariance)."""
    return KernelSpec("tabulated_grid", grid_values=np.zeros((2, 2)))


def build_covariance_matrix(kernel: KernelSpec, times_a, times_b) -> np.ndarray:
    """Kernel Gram matrix between two time vectors, entry (k1,k2) = k(a[k1], b[k2])."""
    ta = np.asarray(times_a, dtype=float)
    tb = np.asarray(times_b, dtype=float)
    return kernel(ta[:, None], tb[None, :])


# ---------------------------------------------------------------------------
# Means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanSpec:
    """Per-subject mean functions on [0,1].

    Either one constant per subject, or two group constants with subjects
    below split_index in group 1.
    """

    constants: Optional[Sequence[float]] = None
    group_values: Optional[tuple[float, float]] = None
    split_index: int = 0

    @staticmethod
    def zero(n: int) -> "MeanSpec":
        return MeanSpec(constants=[0.0] * n)

    @staticmethod
    def constant(values: Sequence[float]) -> "MeanSpec":
        return MeanSpec(constants=list(values))

    @staticmethod
    def two_group(value1: float, value2: float, split_index: int) -> "MeanSpec":
        return MeanSpec(group_values=(value1, value2), split_index=split_index)

    def value(self, subject: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.constants is not None:
            c = float(self.constants[subject])
        else:
            v1, v2 = self.group_values
            c = float(v1 if subject < self.split_index else v2)
        if not np.isfinite(c):
            raise ValueError("mean value must be finite")
        return np.full_like(t, c)


# ---------------------------------------------------------------------------
# Sampling plan and dataset container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingPlan:
    n: int
    m: int
    r: int
    noise_var: Union[float, Sequence[float]] = 0.0  # sigma_j^2 per feature
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.m < 1 or self.r < 1:
            raise ValueError("need n >= 2, m >= 1, r >= 1")
        sig = np.atleast_1d(np.asarray(self.noise_var, dtype=float))
        if sig.size == 1:
            sig = np.repeat(sig, self.m)
        if sig.size != self.m or np.any(sig < 0):
            raise ValueError("noise_var must give one non-negative value per feature")
        object.__setattr__(self, "noise_var", sig)


@dataclass
class LongitudinalDataset:
    """Ragged per-subject, per-feature (times, values) records.

    times[i][j] and values[i][j] are equal-length float arrays, times sorted
    within [0, 1].
    """

    times: list  # times[i][j] -> np.ndarray
    values: list  # values[i][j] -> np.ndarray

    def __post_init__(self):
        for i in range(self.n):
            for j in range(self.m):
                t, v = self.times[i][j], self.values[i][j]
                if len(t) != len(v):
                    raise ValueError(f"record ({i},{j}): time/value length mismatch")
                if len(t) and (t.min() < 0.0 or t.max() > 1.0):
                    raise ValueError(f"record ({i},{j}): times outside [0,1]")

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def m(self) -> int:
        return len(self.times[0]) if self.times else 0

    def record_lengths(self) -> np.ndarray:
        return np.array([[len(self.times[i][j]) for j in range(self.m)] for i in range(self.n)])

    def equals(self, other: "LongitudinalDataset") -> bool:
        if self.n != other.n or self.m != other.m:
            return False
        for i in range(self.n):
            for j in range(self.m):
                if not np.array_equal(self.times[i][j], other.times[i][j]):
                    return False
                if not np.array_equal(self.values[i][j], other.values[i][j]):
                    return False
        return True


# ---------------------------------------------------------------------------
# MGP sampling
# ---------------------------------------------------------------------------


def _psd_factor(cov: np.ndarray, strict: bool = False) -> np.ndarray:
    """Symmetric square-root factor of a (possibly indefinite) covariance.

    Eigen-clips negatives to zero and adds a trace-scaled jitter. With strict
    (used for tabulated kernels, whose PSD-ness is the caller's claim), raises
    FactorizationFailure when the relative negative eigenvalue exceeds
    CLIP_TOL instead of silently repairing it.
    """
    cov = (cov + cov.T) / 2.0
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals.max(), 0.0)
    if strict and evals.min() < -CLIP_TOL * max(scale, 1e-300):
        raise FactorizationFailure(
            f"covariance min eigenvalue {evals.min():.3e} too negative "
            f"(max {scale:.3e})"
        )
    clipped = np.clip(evals, 0.0, None)
    jitter = 1e-10 * clipped.sum() / len(clipped)
    return evecs * np.sqrt(clipped + jitter)


def sample_mgp_subject(
    kernel: KernelSpec,
    mean: MeanSpec,
    subject: int,
    times_per_feature: Sequence[np.ndarray],
    noise_var: Sequence[float],
    rng: np.random.Generator,
    cross_kernel: Optional[KernelSpec] = None,
) -> list:
    """Sample one subject's noisy MGP values at the given per-feature times.

    Cross-feature covariance defaults to zero (block-diagonal); pass
    cross_kernel to fill the off-diagonal blocks.
    """
    m = len(times_per_feature)
    lengths = [len(t) for t in times_per_feature]
    total = sum(lengths)
    cov = np.zeros((total, total))
    offs = np.concatenate([[0], np.cumsum(lengths)])
    for a in range(m):
        sa = slice(offs[a], offs[a + 1])
        cov[sa, sa] = build_covariance_matrix(kernel, times_per_feature[a], times_per_feature[a])
        if cross_kernel is not None:
            for b in range(a + 1, m):
                sb = slice(offs[b], offs[b + 1])
                block = build_covariance_matrix(cross_kernel, times_per_feature[a], times_per_feature[b])
                cov[sa, sb] = block
                cov[sb, sa] = block.T
    strict = kernel.variant == "tabulated_grid" or (
        cross_kernel is not None and cross_kernel.variant == "tabulated_grid"
    )
    factor = _psd_factor(cov, strict=strict)
    z = factor @ rng.standard_normal(total)
    out = []
    for j in range(m):
        sj = slice(offs[j], offs[j + 1])
        vals = z[sj] + mean.value(subject, times_per_feature[j])
        sd = np.sqrt(float(noise_var[j]))
        if sd > 0:
            vals = vals + sd * rng.standard_normal(lengths[j])
        out.append(vals)
    return out


def generate_dataset(
    kernel: KernelSpec,
    mean: MeanSpec,
    plan: SamplingPlan,
    cross_kernel: Optional[KernelSpec] = None,
) -> LongitudinalDataset:
    """Generate a dataset under the Gaussian-process model.

    Times are iid U[0,1] per record, sorted. Deterministic in (kernel, mean,
    plan); subject i's record is invariant to n.
    """
    all_times, all_values = [], []
    for i in range(plan.n):
        rng = np.random.default_rng([plan.seed, i])
        times_i = [np.sort(rng.uniform(0.0, 1.0, plan.r)) for _ in range(plan.m)]
        values_i = sample_mgp_subject(
            kernel, mean, i, times_i, plan.noise_var, rng, cross_kernel=cross_kernel
        )
        all_times.append(times_i)
        all_values.append(values_i)
    return LongitudinalDataset(all_times, all_values)


# ---------------------------------------------------------------------------
# Misspecified processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MisspecProcessSpec:
    """Non-Gaussian-process generators for robustness studies.

    variant is one of "wiener", "exponential_brownian", "ornstein_uhlenbeck".
    """

    variant: str
    drift: float = 0.0      # exponential_brownian
    vol: float = 1.0        # exponential_brownian / ornstein_uhlenbeck
    theta: float = 1.0      # ornstein_uhlenbeck mean-reversion rate
    mean: float = 0.0       # ornstein_uhlenbeck long-run mean

    def __post_init__(self):
        if self.vol < 0:
            raise ValueError("vol must be non-negative")
        if self.variant == "ornstein_uhlenbeck" and self.theta <= 0:
            raise ValueError("theta must be positive")
        for v in (self.drift, self.vol, self.theta, self.mean):
            if not np.isfinite(v):
                raise ValueError("parameters must be finite")


def _wiener_path(times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Start W(0) = 0; increments over the sorted gaps.
    dt = np.diff(np.concatenate([[0.0], times]))
    return np.cumsum(np.sqrt(dt) * rng.standard_normal(len(times)))


def sample_misspecified_subject(
    spec: MisspecProcessSpec, times, rng: np.random.Generator
) -> np.ndarray:
    """Sample one path of the misspecified process at sorted times in [0,1]."""
    times = np.asarray(times, dtype=float)
    if spec.variant == "wiener":
        return _wiener_path(times, rng)
    if spec.variant == "exponential_brownian":
        w = _wiener_path(times, rng)
        return np.exp(spec.drift * times + spec.vol * w)
    if spec.variant == "ornstein_uhlenbeck":
        # Exact discretization started at the stationary law.
        theta, mu, vol = spec.theta, spec.mean, spec.vol
        x = np.empty(len(times))
        prev = mu + vol / np.sqrt(2.0 * theta) * rng.standard_normal()
        prev_t = None
        for k, t in enumerate(times):
            if prev_t is None:
                # Stationary start applies at the first observation time.
                x[k] = prev
            else:
                dt = t - prev_t
                decay = np.exp(-theta * dt)
                sd = vol * np.sqrt((1.0 - np.exp(-2.0 * theta * dt)) / (2.0 * theta))
                x[k] = mu + (x[k - 1] - mu) * decay + sd * rng.standard_normal()
            prev_t = t
        return x
    raise ValueError(f"unknown process variant {spec.variant!r}")


def generate_misspecified_dataset(
    spec: MisspecProcessSpec, plan: SamplingPlan
) -> LongitudinalDataset:
    """Dataset whose latent paths come from a misspecified process (zero mean model)."""
    all_times, all_values = [], []
    for i in range(plan.n):
        rng = np.random.default_rng([plan.seed, i])
        times_i = [np.sort(rng.uniform(0.0, 1.0, plan.r)) for _ in range(plan.m)]
        values_i = []
        for j in range(plan.m):
            v = sample_misspecified_subject(spec, times_i[j], rng)
            sd = np.sqrt(float(plan.noise_var[j]))
            if sd > 0:
                v = v + sd * rng.standard_normal(len(v))
            values_i.append(v)
        all_times.append(times_i)
        all_values.append(values_i)
    return LongitudinalDataset(all_times, all_values)
