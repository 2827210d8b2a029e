"""Independent reference computations used by the tests.

Nothing here imports the package's own numerics: finite differences,
brute-force assignment and closed forms are written from scratch so that a
bug in the implementation cannot also hide in its oracle.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

EPS = 1e-5


def central_fd(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one entry at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = f(x)
        x[idx] = orig - eps
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2.0 * eps)
    return g


def directional_fd(f, x: np.ndarray, direction: np.ndarray, eps: float = EPS) -> float:
    """d/dt f(x + t * direction) at t=0 by central differences."""
    return (f(x + eps * direction) - f(x - eps * direction)) / (2.0 * eps)


def rel_error(a, b, floor: float = 1e-8) -> float:
    """||a - b|| / max(||a||, ||b||); 0 when both are below ``floor``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < floor:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def brute_force_assignment(cost: np.ndarray) -> float:
    """Minimum total cost over every one-to-one matching of the smaller side."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        cost, (n, m) = cost.T, (m, n)
    best = math.inf
    for cols in itertools.permutations(range(m), n):
        best = min(best, sum(cost[i, c] for i, c in enumerate(cols)))
    return best


def plugin_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information (nats) via an explicit contingency table."""
    a_vals, a_idx = np.unique(a, return_inverse=True)
    b_vals, b_idx = np.unique(b, return_inverse=True)
    table = np.zeros((a_vals.size, b_vals.size))
    np.add.at(table, (a_idx, b_idx), 1.0)
    p = table / table.sum()
    pa, pb = p.sum(axis=1, keepdims=True), p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float((p[nz] * np.log(p[nz] / (pa @ pb)[nz])).sum())


def gaussian_kl(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Batch-mean KL(N(mu, e^logvar) || N(0, 1)) summed over dimensions, elementwise loop."""
    total = 0.0
    for m, lv in zip(np.ravel(mu), np.ravel(logvar)):
        total += 0.5 * (math.exp(lv) + m * m - 1.0 - lv)
    return total / np.atleast_2d(mu).shape[0]


def mws_tc_loop(z, mu, logvar) -> float:
    """Minibatch-weighted TC estimate written as explicit loops over the batch."""
    z, mu, logvar = (np.asarray(a, dtype=np.float64) for a in (z, mu, logvar))
    B, D = z.shape

    def logn(x, m, lv):
        return -0.5 * (math.log(2 * math.pi) + lv + (x - m) ** 2 / math.exp(lv))

    def lse(vals):
        top = max(vals)
        return top + math.log(sum(math.exp(v - top) for v in vals))

    acc = 0.0
    for i in range(B):
        joint = [sum(logn(z[i, d], mu[j, d], logvar[j, d]) for d in range(D)) for j in range(B)]
        log_qz = lse(joint) - math.log(B)
        log_marg = sum(lse([logn(z[i, d], mu[j, d], logvar[j, d]) for j in range(B)]) - math.log(B)
                       for d in range(D))
        acc += log_qz - log_marg
    return acc / B
