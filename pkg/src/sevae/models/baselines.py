"""Baseline VAEs on a shared single-encoder / single-decoder backbone."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from sevae import autodiff as ad
from sevae.errors import ConfigError, DimensionError
from sevae.models import losses
from sevae.nn import init_mlp, make_rng

BASELINE_KINDS = ("vae", "beta_vae", "factor_vae", "dip_vae", "beta_tcvae")


@dataclass
class BaselineConfig:
    kind: str
    K: int
    J: int
    latent_dim: int | None = None  # defaults to K
    hidden: tuple = (64, 64)
    beta: float = 4.0  # beta_vae
    gamma: float = 6.0  # factor_vae and beta_tcvae
    dip_lambda_od: float = 10.0
    dip_lambda_d: float = 10.0
    disc_hidden: tuple = (64, 64, 64)
    disc_lr: float = 1e-3
    recon_reduction: str = "sum"

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline kind {self.kind!r}; expected one of {BASELINE_KINDS}")
        if self.latent_dim is None:
            self.latent_dim = self.K
        self.hidden = tuple(int(h) for h in self.hidden)
        self.disc_hidden = tuple(int(h) for h in self.disc_hidden)
        if min(self.K, self.J, self.latent_dim) < 1:
            raise ConfigError("K, J and latent_dim must be >= 1")
        for name in ("beta", "gamma", "dip_lambda_od", "dip_lambda_d"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.recon_reduction not in losses.RECON_REDUCTIONS:
            raise ConfigError(f"recon_reduction must be one of {losses.RECON_REDUCTIONS}, "
                              f"got {self.recon_reduction!r}")

    @property
    def n_items(self) -> int:
        return self.K * self.J

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d


class BaselineVAE:
    def __init__(self, config: BaselineConfig, seed=0):
        self.config = c = config
        self.kind = c.kind
        rng = make_rng(seed)
        D, p = c.latent_dim, c.n_items
        self.encoder = init_mlp([p, *c.hidden, 2 * D], rng, "encoder")
        self.decoder = init_mlp([D, *c.hidden, p], rng, "decoder")
        self.discriminator = None
        if c.kind == "factor_vae":
            self.discriminator = init_mlp([D, *c.disc_hidden, 1], rng, "discriminator")
            # logit is exactly 0 at initialization
            last = self.discriminator.layers[-1].weight
            last.value = np.zeros_like(last.value)

    def parameters(self) -> dict[str, ad.Parameter]:
        params = dict(self.encoder.parameters())
        params.update(self.decoder.parameters())
        return params

    def discriminator_parameters(self) -> dict[str, ad.Parameter]:
        return self.discriminator.parameters() if self.discriminator else {}

    def all_parameters(self) -> dict[str, ad.Parameter]:
        params = self.parameters()
        params.update(self.discriminator_parameters())
        return params

    def encode(self, X):
        X = ad.const(X)
        if X.cols != self.config.n_items:
            raise DimensionError(
                f"input has {X.cols} columns, model expects K*J = {self.config.n_items}")
        out = self.encoder(X)
        D = self.config.latent_dim
        return ad.slice_cols(out, 0, D), ad.slice_cols(out, D, D)

    def decode(self, z):
        return self.decoder(ad.const(z))

    def posterior_means(self, X: np.ndarray, include_nuisance: bool = True,
                        chunk: int = 4096) -> np.ndarray:
        return np.vstack([self.encode(X[s:s + chunk])[0].value
                          for s in range(0, X.shape[0], chunk)])

    def construct_dims(self) -> int:
        return self.config.latent_dim


def dip_ii_penalty(mu: ad.Node, logvar: ad.Node, lambda_od: float, lambda_d: float) -> ad.Node:
    """DIP-VAE-II moment matching of Cov_q[z] = Cov[mu] + E[diag(sigma^2)] to I."""
    B, D = mu.shape
    centered = ad.sub(mu, ad.col_mean(mu))
    cov_mu = ad.scale(ad.matmul(ad.transpose(centered), centered), 1.0 / B)
    off_mask = ad.const(1.0 - np.eye(D))
    off = ad.sum_(ad.square(ad.mul(cov_mu, off_mask)))
    diag = ad.add(ad.col_mean(ad.square(centered)), ad.col_mean(ad.exp(logvar)))
    on = ad.sum_(ad.square(ad.add_scalar(diag, -1.0)))
    return ad.add(ad.scale(off, lambda_od), ad.scale(on, lambda_d))


def permute_dims(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle each latent column independently across the batch."""
    out = np.empty_like(z)
    for d in range(z.shape[1]):
        out[:, d] = z[rng.permutation(z.shape[0]), d]
    return out


def discriminator_loss(model: BaselineVAE, z: np.ndarray, rng) -> ad.Node:
    """Binary cross-entropy separating joint samples from dimension-permuted ones."""
    rng = make_rng(rng)
    real = model.discriminator(ad.const(z))
    fake = model.discriminator(ad.const(permute_dims(z, rng)))
    return ad.scale(ad.add(ad.mean(ad.softplus(ad.neg(real))), ad.mean(ad.softplus(fake))), 0.5)


def baseline_loss(kind: str, model: BaselineVAE, X_batch, hyper: BaselineConfig | None = None,
                  rng=0, step: int = 0) -> losses.LossGraph:
    hyper = hyper or model.config
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"unknown baseline kind {kind!r}")
    rng = make_rng(rng)
    X = ad.const(X_batch)
    mu, logvar = model.encode(X)
    z = losses.reparameterize(mu, logvar, rng.standard_normal(mu.shape))
    recon = losses.recon_error(X, model.decode(z), hyper.recon_reduction, hyper.K)
    terms = {"recon": recon, "kl": losses.kl_gaussian(mu, logvar)}
    weights = {"recon": 1.0, "kl": 1.0}
    if kind == "beta_vae":
        weights["kl"] = hyper.beta
    elif kind == "beta_tcvae":
        # KL = MI + TC + dimension-wise KL; the TC part gets weight gamma
        terms["tc"] = losses.total_correlation_mws(z, mu, logvar)
        weights["tc"] = hyper.gamma - 1.0
    elif kind == "factor_vae":
        if model.discriminator is None:
            raise ConfigError("factor_vae model has no discriminator")
        terms["tc"] = ad.mean(model.discriminator(z))
        weights["tc"] = hyper.gamma
    elif kind == "dip_vae":
        terms["dip"] = dip_ii_penalty(mu, logvar, hyper.dip_lambda_od, hyper.dip_lambda_d)
        weights["dip"] = 1.0
    return losses.LossGraph(terms, weights, samples={"z": z.value})
