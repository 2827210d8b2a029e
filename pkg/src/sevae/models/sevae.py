"""SE-VAE: grouped encoders with shared context, a nuisance latent, modular
decoders and per-group adversarial decoders."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from sevae import autodiff as ad
from sevae.errors import ConfigError, DimensionError, TrainingError
from sevae.models import losses
from sevae.nn import Mlp, init_mlp, make_rng


@dataclass
class SevaeConfig:
    K: int
    J: int
    d_k: int = 1
    d_m: int = 2
    d_c: int = 8
    hidden: tuple = (64, 64)
    beta: float = 1.0
    gamma: float = 5.0
    alpha: float = 10.0
    lambda_adv: float = 1.0
    anneal: bool = True
    warmup_steps: int = 500
    tc_include_nuisance: bool = True
    recon_reduction: str = "sum"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("K", "J", "d_k", "d_c"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_m < 0:
            raise ConfigError(f"d_m must be >= 0, got {self.d_m}")
        for name in ("beta", "gamma", "alpha", "lambda_adv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.anneal and self.warmup_steps <= 0:
            raise ConfigError("KL annealing enabled with warmup_steps <= 0")
        if self.recon_reduction not in losses.RECON_REDUCTIONS:
            raise ConfigError(f"recon_reduction must be one of {losses.RECON_REDUCTIONS}, "
                              f"got {self.recon_reduction!r}")

    @property
    def n_items(self) -> int:
        return self.K * self.J

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class LatentCodes:
    mu: ad.Node  # (N, K*d_k), block k in columns k*d_k:(k+1)*d_k
    logvar: ad.Node
    mu_m: ad.Node | None = None  # (N, d_m)
    logvar_m: ad.Node | None = None


class SEVAE:
    kind = "sevae"

    def __init__(self, config: SevaeConfig, seed=0):
        self.config = c = config
        rng = make_rng(seed)
        p = c.n_items
        self.context = init_mlp([p, *c.hidden, c.d_c], rng, "context")
        self.nuisance = init_mlp([p, *c.hidden, 2 * c.d_m], rng, "nuisance") if c.d_m else None
        self.encoders: list[Mlp] = []
        self.decoders: list[Mlp] = []
        self.adversaries: list[Mlp] = []
        for k in range(c.K):
            self.encoders.append(init_mlp([c.J + c.d_c, *c.hidden, 2 * c.d_k], rng, f"encoder{k}"))
            self.decoders.append(init_mlp([c.d_k + c.d_m, *c.hidden, c.J], rng, f"decoder{k}"))
            if c.d_m:
                self.adversaries.append(init_mlp([c.d_m, *c.hidden, c.J], rng, f"adversary{k}"))

    def mlps(self) -> list[Mlp]:
        out = [self.context] + ([self.nuisance] if self.nuisance else [])
        return out + self.encoders + self.decoders + self.adversaries

    def parameters(self) -> dict[str, ad.Parameter]:
        params = {}
        for mlp in self.mlps():
            params.update(mlp.parameters())
        return params

    def _check_input(self, X: ad.Node) -> None:
        if X.cols != self.config.n_items:
            raise DimensionError(
                f"input has {X.cols} columns, model expects K*J = {self.config.n_items}")

    def encode(self, X) -> LatentCodes:
        X = ad.const(X)
        self._check_input(X)
        c = self.config
        ctx = self.context(X)  # one context vector shared by every group
        mus, logvars = [], []
        for k, enc in enumerate(self.encoders):
            xk = ad.slice_cols(X, k * c.J, c.J)
            out = enc(ad.concat_cols([xk, ctx]))
            mus.append(ad.slice_cols(out, 0, c.d_k))
            logvars.append(ad.slice_cols(out, c.d_k, c.d_k))
        codes = LatentCodes(ad.concat_cols(mus), ad.concat_cols(logvars))
        if self.nuisance is not None:
            out = self.nuisance(X)
            codes.mu_m = ad.slice_cols(out, 0, c.d_m)
            codes.logvar_m = ad.slice_cols(out, c.d_m, c.d_m)
        return codes

    def decode(self, z, z_m=None, reverse_adversary: bool = False):
        """Main and adversarial reconstructions, each (N, K*J).

        The adversaries see ``z_m`` standardized over the batch, so the
        reversed gradient can lower their success only by removing information
        from ``z_m``; inflating its scale no longer helps, which keeps the
        min-max game bounded while the KL weight is annealed near zero.  With
        ``reverse_adversary`` that input passes through a gradient-reversal
        node.  Without a nuisance latent the adversarial output is None.
        """
        c = self.config
        z = ad.const(z)
        if z.cols != c.K * c.d_k:
            raise DimensionError(f"construct latents have {z.cols} columns, expected {c.K * c.d_k}")
        if c.d_m:
            if z_m is None:
                raise DimensionError(f"model has d_m={c.d_m} but no nuisance latent was given")
            z_m = ad.const(z_m)
            if z_m.cols != c.d_m or z_m.rows != z.rows:
                raise DimensionError(f"nuisance latent has shape {z_m.shape}, expected (N, {c.d_m})")
        recon, adv = [], []
        adv_in = None
        if c.d_m:
            adv_in = _standardize_cols(ad.grad_reverse(z_m) if reverse_adversary else z_m)
        for k in range(c.K):
            zk = ad.slice_cols(z, k * c.d_k, c.d_k)
            recon.append(self.decoders[k](ad.concat_cols([zk, z_m]) if c.d_m else zk))
            if c.d_m:
                adv.append(self.adversaries[k](adv_in))
        return ad.concat_cols(recon), (ad.concat_cols(adv) if adv else None)

    def posterior_means(self, X: np.ndarray, include_nuisance: bool = True,
                        chunk: int = 4096) -> np.ndarray:
        parts = []
        for start in range(0, X.shape[0], chunk):
            codes = self.encode(X[start:start + chunk])
            cols = [codes.mu.value]
            if include_nuisance and codes.mu_m is not None:
                cols.append(codes.mu_m.value)
            parts.append(np.hstack(cols))
        return np.vstack(parts)

    def construct_dims(self) -> int:
        return self.config.K * self.config.d_k


def _standardize_cols(a: ad.Node, eps: float = 1e-6) -> ad.Node:
    """Center each column over the batch and scale it to unit variance."""
    centered = ad.sub(a, ad.col_mean(a))
    var = ad.add_scalar(ad.col_mean(ad.square(centered)), eps)
    return ad.mul(centered, ad.exp(ad.scale(ad.log(var), -0.5)))


def sevae_loss(model: SEVAE, X_batch, config: SevaeConfig | None = None, rng=0,
               step: int = 0) -> losses.LossGraph:
    """Full SE-VAE objective on one batch.

    ``rng`` supplies the reparameterization noise; ``step`` drives KL
    annealing.  The adversarial term trains the adversaries to reconstruct
    each group from ``z_m`` while its reversed gradient pushes the nuisance
    encoder away from that information.
    """
    c = config or model.config
    X = ad.const(X_batch)
    if not np.isfinite(X.value).all():
        raise TrainingError("non-finite values in the input batch")
    codes = model.encode(X)
    rng = make_rng(rng)
    z = losses.reparameterize(codes.mu, codes.logvar, rng.standard_normal(codes.mu.shape))
    mu_all, lv_all, z_all = codes.mu, codes.logvar, z
    z_m = None
    if codes.mu_m is not None:
        z_m = losses.reparameterize(codes.mu_m, codes.logvar_m,
                                    rng.standard_normal(codes.mu_m.shape))
    x_hat, x_adv = model.decode(z, z_m, reverse_adversary=True)

    terms = {"recon": losses.recon_error(X, x_hat, c.recon_reduction, c.K)}
    if z_m is not None:
        kl = losses.kl_gaussian(ad.concat_cols([codes.mu, codes.mu_m]),
                                ad.concat_cols([codes.logvar, codes.logvar_m]))
        if c.tc_include_nuisance:
            mu_all = ad.concat_cols([codes.mu, codes.mu_m])
            lv_all = ad.concat_cols([codes.logvar, codes.logvar_m])
            z_all = ad.concat_cols([z, z_m])
    else:
        kl = losses.kl_gaussian(codes.mu, codes.logvar)
    terms["kl"] = kl
    terms["tc"] = losses.total_correlation_mws(z_all, mu_all, lv_all)
    blocks = [ad.slice_cols(z, k * c.d_k, c.d_k) for k in range(c.K)]
    terms["ortho"] = losses.orthogonality_penalty(blocks) if c.K >= 2 else ad.Node(0.0)
    terms["adv"] = (losses.recon_error(X, x_adv, c.recon_reduction, c.K) if x_adv is not None
                    else ad.Node(0.0))

    anneal = losses.kl_anneal_weight(step, c.anneal, c.warmup_steps)
    weights = {"recon": 1.0, "kl": anneal * c.beta, "tc": c.gamma,
               "ortho": c.alpha, "adv": c.lambda_adv}
    return losses.LossGraph(terms, weights, anneal, samples={"z": z_all.value})
