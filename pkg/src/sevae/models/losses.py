"""Loss terms shared by SE-VAE and the baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sevae import autodiff as ad
from sevae.errors import ConfigError, ContractError, DimensionError, TrainingError

LOG_2PI = math.log(2.0 * math.pi)

COMPONENTS = ("recon", "kl", "tc", "ortho", "adv", "dip")
RECON_REDUCTIONS = ("sum", "group", "mean")


@dataclass
class LossBreakdown:
    """Scalar loss components and the weights that recompose ``total``."""
    recon: float = 0.0
    kl: float = 0.0
    tc: float = 0.0
    ortho: float = 0.0
    adv: float = 0.0
    dip: float = 0.0
    total: float = 0.0
    anneal_weight: float = 1.0
    weights: dict = field(default_factory=dict)

    def recomposed(self) -> float:
        return sum(w * getattr(self, name) for name, w in self.weights.items())

    def as_row(self) -> dict:
        row = {name: getattr(self, name) for name in COMPONENTS}
        row["total"] = self.total
        row["anneal_weight"] = self.anneal_weight
        return row


@dataclass
class LossGraph:
    """Differentiable loss terms; ``total`` is their weighted sum."""
    terms: dict  # name -> 1x1 Node
    weights: dict  # name -> float
    anneal_weight: float = 1.0
    samples: dict = field(default_factory=dict)  # detached draws, e.g. "z"
    total: ad.Node = field(init=False)

    def __post_init__(self):
        for name, node in self.terms.items():
            if not np.isfinite(node.value).all():
                raise TrainingError(f"non-finite {name} loss component")
        total = None
        for name, node in self.terms.items():
            term = ad.scale(node, self.weights[name])
            total = term if total is None else ad.add(total, term)
        self.total = total

    def breakdown(self) -> LossBreakdown:
        values = {name: node.item() for name, node in self.terms.items()}
        return LossBreakdown(total=self.total.item(), anneal_weight=self.anneal_weight,
                             weights=dict(self.weights), **values)


def mse(x: ad.Node, x_hat: ad.Node) -> ad.Node:
    return ad.mean(ad.square(ad.sub(x, x_hat)))


def recon_error(x: ad.Node, x_hat: ad.Node, reduction: str = "sum", groups: int = 1) -> ad.Node:
    """Batch-averaged squared reconstruction error.

    ``sum`` adds every column per sample (the Gaussian log-likelihood scale up
    to a constant), ``group`` divides that by the number of column groups and
    ``mean`` averages over every entry.
    """
    if reduction not in RECON_REDUCTIONS:
        raise ConfigError(f"recon_reduction must be one of {RECON_REDUCTIONS}, got {reduction!r}")
    err = mse(x, x_hat)
    if reduction == "sum":
        return ad.scale(err, x.cols)
    if reduction == "group":
        return ad.scale(err, x.cols / groups)
    return err


def reparameterize(mu: ad.Node, logvar: ad.Node, noise) -> ad.Node:
    """z = mu + exp(logvar / 2) * noise."""
    noise = ad.const(noise)
    if not (mu.shape == logvar.shape == noise.shape):
        raise DimensionError(
            f"reparameterize: shapes {mu.shape}, {logvar.shape}, {noise.shape} differ")
    return ad.add(mu, ad.mul(ad.exp(ad.scale(logvar, 0.5)), noise))


def kl_gaussian(mu: ad.Node, logvar: ad.Node) -> ad.Node:
    """Batch mean of KL(N(mu, exp(logvar)) || N(0, I)), summed over dimensions."""
    if mu.shape != logvar.shape:
        raise DimensionError(f"kl_gaussian: shapes {mu.shape} and {logvar.shape} differ")
    inner = ad.sub(ad.add(ad.exp(logvar), ad.square(mu)), ad.add_scalar(logvar, 1.0))
    return ad.scale(ad.sum_(inner), 0.5 / mu.rows)


def _log_density_matrix(z: ad.Node, mu: ad.Node, logvar: ad.Node, d: int) -> ad.Node:
    """(B, B) matrix of log N(z_i[d]; mu_j[d], exp(logvar_j[d]))."""
    zd = ad.slice_cols(z, d, 1)
    mud = ad.transpose(ad.slice_cols(mu, d, 1))
    lvd = ad.transpose(ad.slice_cols(logvar, d, 1))
    sq = ad.mul(ad.square(ad.sub(zd, mud)), ad.exp(ad.neg(lvd)))
    return ad.scale(ad.add_scalar(ad.add(sq, lvd), LOG_2PI), -0.5)


def _lse_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=1, keepdims=True))


def total_correlation_mws(z: ad.Node, mu: ad.Node, logvar: ad.Node,
                          dataset_size: float = 1.0) -> ad.Node:
    """Minibatch-weighted-sampling estimate of E[log q(z) - sum_d log q(z_d)].

    Every sample is scored under every batch element's posterior and the
    aggregate densities are normalized by ``log(B * dataset_size)``.  With the
    default ``dataset_size=1`` the batch itself is the mixture being scored,
    which makes the estimate consistent for the batch aggregate posterior.
    Larger values add the constant ``(D - 1) * log(dataset_size)``, which does
    not change gradients.

    The gradient is written out by hand: both log-sum-exps reduce to softmax
    weights over the scoring posteriors ``j``.
    """
    if not (z.shape == mu.shape == logvar.shape):
        raise DimensionError(
            f"total_correlation_mws: shapes {z.shape}, {mu.shape}, {logvar.shape} differ")
    B, D = z.shape
    if B < 2:
        raise ContractError(f"total correlation needs a batch of at least 2, got {B}")
    log_norm = math.log(B * dataset_size)
    zv, mv, lv = z.value, mu.value, logvar.value
    prec = np.exp(-lv)
    # one (B, B) slab per dimension keeps temporaries small
    diffs, scaled, dens = [], [], []
    joint = np.zeros((B, B))
    for d in range(D):
        diff = zv[:, d:d + 1] - mv[:, d]
        sq = diff * diff * prec[:, d]
        diffs.append(diff)
        scaled.append(sq)
        dens.append(-0.5 * (sq + lv[:, d] + LOG_2PI))
        joint += dens[-1]
    lse_joint = _lse_rows(joint)
    lse_marg = [_lse_rows(L) for L in dens]
    value = float(np.mean(lse_joint - sum(lse_marg))) + (D - 1) * log_norm

    def backward_fn(g):
        # dTC/dL_d[i, j] = (softmax_j joint[i] - softmax_j L_d[i]) / B
        g_z, g_mu, g_lv = np.empty((B, D)), np.empty((B, D)), np.empty((B, D))
        p_joint = np.exp(joint - lse_joint)
        c = g[0, 0] / B
        for d in range(D):
            W = c * (p_joint - np.exp(dens[d] - lse_marg[d]))
            pair = W * diffs[d] * prec[:, d]
            g_z[:, d] = -pair.sum(axis=1)
            g_mu[:, d] = pair.sum(axis=0)
            g_lv[:, d] = (W * (0.5 * scaled[d] - 0.5)).sum(axis=0)
        return g_z, g_mu, g_lv

    return ad.Node(value, (z, mu, logvar), backward_fn)


def total_correlation_mws_reference(z: ad.Node, mu: ad.Node, logvar: ad.Node,
                          dataset_size: float = 1.0) -> ad.Node:
    """Same estimate as :func:`total_correlation_mws`, built from primitive ops.

    Slower, but its gradient comes from the generic tape; tests use it as an
    independent check on the fused backward rule.
    """
    if not (z.shape == mu.shape == logvar.shape):
        raise DimensionError(
            f"total_correlation_mws: shapes {z.shape}, {mu.shape}, {logvar.shape} differ")
    B, D = z.shape
    if B < 2:
        raise ContractError(f"total correlation needs a batch of at least 2, got {B}")
    log_norm = math.log(B * dataset_size)
    joint = None
    marginals = None
    for d in range(D):
        ld = _log_density_matrix(z, mu, logvar, d)
        joint = ld if joint is None else ad.add(joint, ld)
        md = ad.logsumexp_rows(ld)
        marginals = md if marginals is None else ad.add(marginals, md)
    log_qz = ad.add_scalar(ad.logsumexp_rows(joint), -log_norm)
    log_prod = ad.add_scalar(marginals, -D * log_norm)
    return ad.mean(ad.sub(log_qz, log_prod))


def orthogonality_penalty(blocks: Sequence[ad.Node]) -> ad.Node:
    """Mean squared cross-covariance between distinct latent blocks.

    Each block is centered over the batch; for every pair ``k < j`` the
    entries of ``z_k^T z_j / B`` are squared and summed, and the total is
    divided by the number of (block pair, dimension pair) combinations.
    """
    blocks = list(blocks)
    if len(blocks) < 2:
        raise ContractError(f"orthogonality needs at least 2 blocks, got {len(blocks)}")
    B = blocks[0].rows
    if B < 2:
        raise ContractError(f"orthogonality needs a batch of at least 2, got {B}")
    centered = [ad.sub(b, ad.col_mean(b)) for b in blocks]
    total, count = None, 0
    for k in range(len(centered)):
        for j in range(k + 1, len(centered)):
            cov = ad.scale(ad.matmul(ad.transpose(centered[k]), centered[j]), 1.0 / B)
            term = ad.sum_(ad.square(cov))
            total = term if total is None else ad.add(total, term)
            count += cov.value.size
    return ad.scale(total, 1.0 / count)


def kl_anneal_weight(step: int, enabled: bool = True, warmup_steps: int = 0) -> float:
    """Linear KL warm-up: min(1, step / warmup_steps), or 1 when disabled."""
    if step < 0:
        raise ContractError(f"step must be >= 0, got {step}")
    if not enabled:
        return 1.0
    if warmup_steps <= 0:
        raise ConfigError("KL annealing enabled with warmup_steps <= 0")
    return min(1.0, step / warmup_steps)
