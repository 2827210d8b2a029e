"""Equal-frequency discretization, plug-in mutual information, and MIG."""
from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

from sevae.errors import ContractError


class Discretized(NamedTuple):
    labels: np.ndarray
    degenerate: bool


def quantile_discretize(values, bins: int = 20) -> Discretized:
    """Assign equal-frequency bin labels in ``[0, bins)``.

    Samples are ranked by value, ties broken by index, and rank ``r`` gets
    label ``floor(r * bins / N)``.  A constant column maps to all zeros and is
    flagged degenerate.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if bins < 2:
        raise ContractError(f"bins must be >= 2, got {bins}")
    if n < bins:
        raise ContractError(f"need at least {bins} samples for {bins} bins, got {n}")
    if np.all(values == values[0]):
        return Discretized(np.zeros(n, dtype=np.int64), True)
    order = np.argsort(values, kind="stable")
    labels = np.empty(n, dtype=np.int64)
    labels[order] = (np.arange(n) * bins) // n
    return Discretized(labels, False)


def entropy(labels) -> float:
    labels = np.asarray(labels).ravel()
    counts = np.bincount(labels)
    p = counts[counts > 0] / labels.size
    return -math.fsum(p * np.log(p))


def mutual_information(labels_a, labels_b) -> float:
    """Plug-in MI (nats) from the joint histogram of two label vectors.

    Terms are combined with ``math.fsum`` so the result does not depend on
    argument order.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise ContractError(f"label vectors differ in length ({a.size} vs {b.size})")
    n = a.size
    na, nb = int(a.max()) + 1, int(b.max()) + 1
    joint = np.bincount(a * nb + b, minlength=na * nb).reshape(na, nb)
    pa = joint.sum(axis=1) / n
    pb = joint.sum(axis=0) / n
    ia, ib = np.nonzero(joint)
    pab = joint[ia, ib] / n
    return max(0.0, math.fsum(pab * np.log(pab / (pa[ia] * pb[ib]))))


def mi_matrix(latents: np.ndarray, factors: np.ndarray, bins: int = 20):
    """(D, K) MI matrix plus per-factor entropies and degeneracy flags."""
    zl = [quantile_discretize(latents[:, d], bins).labels for d in range(latents.shape[1])]
    fl = [quantile_discretize(factors[:, k], bins) for k in range(factors.shape[1])]
    m = np.array([[mutual_information(z, f.labels) for f in fl] for z in zl])
    h = np.array([entropy(f.labels) for f in fl])
    return m, h


def mig(latents: np.ndarray, factors: np.ndarray, bins: int = 20) -> float:
    """Mean over factors of (top-1 MI - top-2 MI) / H(factor)."""
    m, h = mi_matrix(latents, factors, bins)
    gaps = []
    for k in range(m.shape[1]):
        if h[k] <= 0:
            warnings.warn(f"factor {k} has zero entropy; excluded from MIG", RuntimeWarning)
            continue
        col = np.sort(m[:, k])[::-1]
        second = col[1] if col.size > 1 else 0.0
        gaps.append((col[0] - second) / h[k])
    return float(np.mean(gaps)) if gaps else 0.0
