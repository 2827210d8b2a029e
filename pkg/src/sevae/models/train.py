"""Mini-batch Adam training for every model kind, plus checkpoints."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from sevae import autodiff as ad
from sevae.errors import ConfigError, DimensionError, DomainError, TrainingError
from sevae.models import losses
from sevae.models.baselines import (BASELINE_KINDS, BaselineConfig, BaselineVAE,
                                    baseline_loss, discriminator_loss)
from sevae.models.sevae import SEVAE, SevaeConfig, sevae_loss
from sevae.nn import Adam, load_params_json, params_to_json

log = logging.getLogger(__name__)

MODEL_KINDS = ("sevae",) + BASELINE_KINDS


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


@dataclass
class TrainResult:
    model: object
    history: list[losses.LossBreakdown] = field(default_factory=list)
    steps: int = 0


def model_config(kind: str, K: int, J: int, **params):
    """Build the config object for ``kind`` from plain keyword values."""
    if kind == "sevae":
        return SevaeConfig(K=K, J=J, **params)
    if kind in BASELINE_KINDS:
        return BaselineConfig(kind=kind, K=K, J=J, **params)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def build_model(config, seed=0):
    if isinstance(config, SevaeConfig):
        return SEVAE(config, seed)
    if isinstance(config, BaselineConfig):
        return BaselineVAE(config, seed)
    raise ConfigError(f"unsupported config type {type(config).__name__}")


def model_loss(model, X_batch, rng, step: int) -> losses.LossGraph:
    if isinstance(model, SEVAE):
        return sevae_loss(model, X_batch, model.config, rng, step)
    return baseline_loss(model.kind, model, X_batch, model.config, rng, step)


def _average(rows: list[tuple[int, losses.LossBreakdown]]) -> losses.LossBreakdown:
    n = sum(size for size, _ in rows)
    out = losses.LossBreakdown(anneal_weight=rows[-1][1].anneal_weight,
                               weights=dict(rows[-1][1].weights))
    for name in losses.COMPONENTS + ("total",):
        setattr(out, name, sum(size * getattr(b, name) for size, b in rows) / n)
    return out


def train(config, data, train_config: TrainConfig | None = None, model=None) -> TrainResult:
    """Train a model on ``data`` (a Dataset or an (N, K*J) array).

    Seeds for initialization, shuffling and reparameterization noise are all
    derived from ``train_config.seed``, so identical inputs give identical
    loss curves.
    """
    tc = train_config or TrainConfig()
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != config.n_items:
        raise DimensionError(f"data has {X.shape[1]} columns, config expects K*J = {config.n_items}")
    if X.shape[0] < 2:
        raise ConfigError("training needs at least 2 rows")
    init_seq, shuffle_seq, noise_seq, disc_seq = np.random.SeedSequence(tc.seed).spawn(4)
    if model is None:
        model = build_model(config, np.random.default_rng(init_seq))
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    disc_rng = np.random.default_rng(disc_seq)

    params = model.parameters()
    opt = Adam(params, lr=tc.lr)
    disc_opt = None
    if getattr(model, "discriminator", None) is not None:
        disc_opt = Adam(model.discriminator_parameters(), lr=model.config.disc_lr)

    result = TrainResult(model)
    n = X.shape[0]
    bs = min(tc.batch_size, n)
    step = 0
    for epoch in range(tc.epochs):
        order = shuffle_rng.permutation(n)
        rows = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            if idx.size < 2:
                continue
            batch = X[idx]
            try:
                graph = model_loss(model, batch, noise_rng, step)
                opt.step(ad.backward(graph.total, params))
                if disc_opt is not None:
                    d_loss = discriminator_loss(model, graph.samples["z"], disc_rng)
                    disc_opt.step(ad.backward(d_loss, disc_opt.params))
            except (TrainingError, DomainError) as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
            rows.append((idx.size, graph.breakdown()))
            step += 1
        summary = _average(rows)
        if not np.isfinite(summary.total):
            raise TrainingError(f"epoch {epoch}: total loss is not finite")
        result.history.append(summary)
        log.debug("epoch %d total=%.4f recon=%.4f", epoch, summary.total, summary.recon)
    result.steps = step
    return result


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model, path, extra: dict | None = None) -> None:
    blob = {"kind": model.kind, "config": model.config.to_dict(),
            "params": params_to_json(_all_params(model))}
    if extra:
        blob["provenance"] = extra
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path):
    blob = json.loads(Path(path).read_text())
    kind = blob.get("kind")
    cfg = dict(blob["config"])
    cfg.pop("kind", None)
    K, J = cfg.pop("K"), cfg.pop("J")
    model = build_model(model_config(kind, K, J, **cfg))
    load_params_json(_all_params(model), blob["params"])
    return model


def _all_params(model) -> dict:
    if isinstance(model, BaselineVAE):
        return model.all_parameters()
    return model.parameters()
