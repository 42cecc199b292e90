"""Deterministic two-cluster algorithms over whitened tensor slices.

Both clusterers are pure functions of their input: the selective machinery
re-invokes them on perturbed tensors, and the truncation set is only well
defined if repeated calls agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionMismatch
from .whiten import WhitenedTensor

LINKAGES = ("ward", "complete", "average")


@dataclass(frozen=True)
class Partition:
    """Unordered 2-part split of subject indices 0..n-1.

    Canonical orientation: the part containing index 0 is stored as c1, so
    unordered equality reduces to field comparison.
    """

    c1: tuple
    c2: tuple

    @staticmethod
    def from_labels(labels: np.ndarray) -> "Partition":
        labels = np.asarray(labels)
        idx1 = tuple(np.flatnonzero(labels == labels[0]).tolist())
        idx2 = tuple(np.flatnonzero(labels != labels[0]).tolist())
        if not idx1 or not idx2:
            raise ValueError("both parts must be non-empty")
        return Partition(idx1, idx2)

    @property
    def n(self) -> int:
        return len(self.c1) + len(self.c2)

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        out[list(self.c1)] = 0
        out[list(self.c2)] = 1
        return out


def partition_equal(a: Partition, b: Partition) -> bool:
    """Unordered-set equality of two partitions of the same [n]."""
    if a.n != b.n:
        raise DimensionMismatch(f"partitions over {a.n} vs {b.n} subjects")
    return a.c1 == b.c1 and a.c2 == b.c2


def _slices_matrix(tensor: Union[WhitenedTensor, np.ndarray]) -> np.ndarray:
    data = tensor.data if isinstance(tensor, WhitenedTensor) else np.asarray(tensor)
    return data.reshape(data.shape[0], -1)


def kmeans2(tensor: Union[WhitenedTensor, np.ndarray], max_iters: int = 100) -> Partition:
    """Lloyd's algorithm with k=2 and deterministic initialization.

    Centroid 1 starts at the lexicographically smallest slice vector,
    centroid 2 at the slice farthest from it. Assignment ties go to cluster 1;
    an emptied cluster is repaired with the point farthest from its centroid.
    """
    x = _slices_matrix(tensor)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 slices")

    first = np.lexsort(x.T[::-1])[0]
    c1 = x[first]
    c2 = x[np.argmax(((x - c1) ** 2).sum(axis=1))]

    labels = None
    for _ in range(max_iters):
        d1 = ((x - c1) ** 2).sum(axis=1)
        d2 = ((x - c2) ** 2).sum(axis=1)
        new_labels = (d2 < d1).astype(int)  # tie -> cluster 1
        for lab in (0, 1):
            if not np.any(new_labels == lab):
                other = ((x - (c1 if lab == 1 else c2)) ** 2).sum(axis=1)
                new_labels[np.argmax(other)] = lab
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        c1 = x[labels == 0].mean(axis=0)
        c2 = x[labels == 1].mean(axis=0)
    return Partition.from_labels(labels)


def hclust2(tensor: Union[WhitenedTensor, np.ndarray], linkage: str = "ward") -> Partition:
    """Agglomerative 2-clustering on squared Euclidean distances.

    Lance-Williams updates; merge ties are broken by the smallest pair of
    active cluster indices.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    x = _slices_matrix(tensor)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 slices")

    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(sq, np.inf)
    sizes = np.ones(n)
    members = [[i] for i in range(n)]
    active = np.ones(n, dtype=bool)

    for _ in range(n - 2):
        # Smallest distance; ties resolved toward the lexicographically
        # smallest (i, j) because argmin scans row-major.
        masked = np.where(active[:, None] & active[None, :], sq, np.inf)
        flat = np.argmin(masked)
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        ni, nj = sizes[i], sizes[j]
        d_ij = sq[i, j]
        k = active.copy()
        k[i] = k[j] = False
        if linkage == "ward":
            nk = sizes[k]
            new = ((ni + nk) * sq[i, k] + (nj + nk) * sq[j, k] - nk * d_ij) / (ni + nj + nk)
        elif linkage == "complete":
            new = np.maximum(sq[i, k], sq[j, k])
        else:
            new = (ni * sq[i, k] + nj * sq[j, k]) / (ni + nj)
        sq[i, k] = new
        sq[k, i] = new
        sizes[i] = ni + nj
        members[i] = members[i] + members[j]
        active[j] = False

    labels = np.empty(n, dtype=int)
    rest = [c for c in np.flatnonzero(active)]
    labels[members[rest[0]]] = 0
    labels[members[rest[1]]] = 1
    return Partition.from_labels(labels)
