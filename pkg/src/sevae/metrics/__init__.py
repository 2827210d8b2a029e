"""Disentanglement metrics computed on posterior means."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from sevae.errors import ContractError
from sevae.metrics.dci import ImportanceMatrix, dci, lasso_cd, lasso_importance
from sevae.metrics.hungarian import hungarian
from sevae.metrics.information import (Discretized, entropy, mi_matrix, mig,
                                       mutual_information, quantile_discretize)

METRIC_NAMES = ("mig", "dci_d", "dci_c", "dci_i", "sap", "perm_align")

MIN_SAMPLES = 100


def check_eval_input(latents, factors) -> tuple[np.ndarray, np.ndarray]:
    latents = np.asarray(latents, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    if latents.ndim == 1:
        latents = latents[:, None]
    if factors.ndim == 1:
        factors = factors[:, None]
    if latents.shape[0] != factors.shape[0]:
        raise ContractError(
            f"latents have {latents.shape[0]} rows but factors have {factors.shape[0]}")
    if latents.shape[0] < MIN_SAMPLES:
        raise ContractError(f"metrics need at least {MIN_SAMPLES} samples, got {latents.shape[0]}")
    if not (np.all(np.isfinite(latents)) and np.all(np.isfinite(factors))):
        raise ContractError("latents and factors must be finite")
    return latents, factors


def correlation_matrix(latents: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """(D, K) Pearson correlations; constant columns correlate as 0."""
    def unit(a):
        c = a - a.mean(axis=0)
        norm = np.sqrt((c * c).sum(axis=0))
        return np.divide(c, norm, out=np.zeros_like(c), where=norm > 0)
    return np.clip(unit(latents).T @ unit(factors), -1.0, 1.0)


def sap(latents, factors) -> float:
    """Mean over factors of the gap between the two best single-latent R^2 values."""
    latents, factors = check_eval_input(latents, factors)
    S = correlation_matrix(latents, factors) ** 2
    gaps = []
    for k in range(S.shape[1]):
        col = np.sort(S[:, k])[::-1]
        gaps.append(col[0] - (col[1] if col.size > 1 else 0.0))
    return float(np.mean(gaps))


def permutation_alignment(latents, factors) -> float:
    """Mean |corr| of latent/factor pairs under the optimal one-to-one matching.

    Averaged over factors; a factor left unmatched (fewer latents than
    factors) contributes 0.
    """
    latents, factors = check_eval_input(latents, factors)
    C = np.abs(correlation_matrix(latents, factors))
    pairs, _ = hungarian(1.0 - C)
    return float(sum(C[i, j] for i, j in pairs) / factors.shape[1])


@dataclass
class MetricsReport:
    mig: float
    dci_d: float
    dci_c: float
    dci_i: float
    sap: float
    perm_align: float
    metadata: dict = field(default_factory=dict)

    def scores(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(latents, factors, align_latents=None, bins: int = 20, lasso_lambda: float = 0.01,
             seed: int = 0, metadata: dict | None = None) -> MetricsReport:
    """All six scores.

    ``align_latents`` selects the columns used for permutation alignment
    (e.g. construct latents without the nuisance block); defaults to
    ``latents``.
    """
    latents, factors = check_eval_input(latents, factors)
    align = latents if align_latents is None else check_eval_input(align_latents, factors)[0]
    imp = lasso_importance(latents, factors, lasso_lambda, seed)
    d, c, i = dci(imp)
    meta = {"bins": bins, "dci_probe": "lasso", "lasso_lambda": lasso_lambda,
            "lasso_converged": imp.converged, "dci_degenerate": imp.degenerate,
            "n_eval": int(latents.shape[0]), "n_latents": int(latents.shape[1]),
            "n_aligned_latents": int(align.shape[1])}
    meta.update(metadata or {})
    return MetricsReport(mig=mig(latents, factors, bins), dci_d=d, dci_c=c, dci_i=i,
                         sap=sap(latents, factors),
                         perm_align=permutation_alignment(align, factors), metadata=meta)


__all__ = [
    "METRIC_NAMES", "Discretized", "ImportanceMatrix", "MetricsReport", "check_eval_input",
    "correlation_matrix", "dci", "entropy", "evaluate", "hungarian", "lasso_cd",
    "lasso_importance", "mi_matrix", "mig", "mutual_information", "permutation_alignment",
    "quantile_discretize", "sap",
]
