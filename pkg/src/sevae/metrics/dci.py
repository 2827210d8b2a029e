"""DCI scores from an L1-regression importance matrix."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ImportanceMatrix:
    R: np.ndarray  # (D, K) absolute lasso coefficients
    r2: np.ndarray  # (K,) held-out R^2 per factor
    zero_columns: np.ndarray = field(default=None)  # (K,) factors with no importance
    converged: bool = True
    degenerate: bool = False

    def __post_init__(self):
        if self.zero_columns is None:
            self.zero_columns = self.R.sum(axis=0) == 0
        self.degenerate = bool(self.degenerate or not self.R.any())


@dataclass
class LassoFit:
    coef: np.ndarray
    converged: bool
    iterations: int


def lasso_cd(X: np.ndarray, y: np.ndarray, lam: float, max_iter: int = 10000,
             tol: float = 1e-12) -> LassoFit:
    """Cyclic coordinate descent for ``(1/2n)||y - Xw||^2 + lam * ||w||_1``.

    Works on the Gram matrix, so each sweep costs O(D^2).  Columns that are
    identically zero keep a zero coefficient.
    """
    n, D = X.shape
    G = X.T @ X / n
    c = X.T @ y / n
    diag = np.diag(G).copy()
    w = np.zeros(D)
    for it in range(1, max_iter + 1):
        max_step = 0.0
        for j in range(D):
            if diag[j] == 0.0:
                continue
            rho = c[j] - G[j] @ w + diag[j] * w[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / diag[j]
            max_step = max(max_step, abs(new - w[j]))
            w[j] = new
        if max_step <= tol * max(1.0, float(np.abs(w).max())):
            return LassoFit(w, True, it)
    return LassoFit(w, False, max_iter)


def _standardize(train: np.ndarray, test: np.ndarray):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    tr = np.where(sd > 0, (train - mu) / safe, 0.0)
    te = np.where(sd > 0, (test - mu) / safe, 0.0)
    return tr, te


def lasso_importance(latents: np.ndarray, factors: np.ndarray, lam: float = 0.01,
                     seed: int = 0, max_iter: int = 10000) -> ImportanceMatrix:
    """Per-factor L1 probes over all latents, fit on one half, scored on the other."""
    n = latents.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
    Ztr, Zte = _standardize(latents[tr], latents[te])
    Ftr, Fte = _standardize(factors[tr], factors[te])
    D, K = latents.shape[1], factors.shape[1]
    R = np.zeros((D, K))
    r2 = np.zeros(K)
    converged = True
    for k in range(K):
        fit = lasso_cd(Ztr, Ftr[:, k], lam, max_iter)
        converged &= fit.converged
        R[:, k] = np.abs(fit.coef)
        resid = Fte[:, k] - Zte @ fit.coef
        sst = np.sum((Fte[:, k] - Fte[:, k].mean()) ** 2)
        r2[k] = 1.0 - np.sum(resid ** 2) / sst if sst > 0 else 0.0
    return ImportanceMatrix(R, r2, converged=bool(converged))


def _specificity(P: np.ndarray, base: int) -> np.ndarray:
    """1 - entropy of each row of P (rows sum to 1 or are zero), log base ``base``."""
    if base <= 1:
        return np.ones(P.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(P > 0, np.log(P), 0.0)
    return 1.0 - (-(P * logs).sum(axis=1)) / math.log(base)


def _weighted_score(R: np.ndarray) -> float:
    """Mass-weighted mean of per-row specificity of R."""
    mass = R.sum(axis=1)
    total = mass.sum()
    if total == 0:
        return 0.0
    P = np.divide(R, mass[:, None], out=np.zeros_like(R), where=mass[:, None] > 0)
    return float(np.sum(_specificity(P, R.shape[1]) * mass / total))


def dci(importance: ImportanceMatrix) -> tuple[float, float, float]:
    """(disentanglement, completeness, informativeness)."""
    R = importance.R
    informativeness = float(np.mean(np.clip(importance.r2, 0.0, 1.0)))
    if not R.any():
        return 0.0, 0.0, informativeness
    return _weighted_score(R), _weighted_score(R.T), informativeness
