"""SE-VAE and baseline VAEs."""
from sevae.models.baselines import (BASELINE_KINDS, BaselineConfig, BaselineVAE,
                                    baseline_loss, dip_ii_penalty, discriminator_loss)
from sevae.models.losses import (LossBreakdown, LossGraph, kl_anneal_weight, kl_gaussian,
                                 orthogonality_penalty, reparameterize, total_correlation_mws)
from sevae.models.sevae import SEVAE, LatentCodes, SevaeConfig, sevae_loss
from sevae.models.train import (MODEL_KINDS, TrainConfig, TrainResult, build_model,
                                load_checkpoint, model_config, model_loss, save_checkpoint,
                                train)

__all__ = [
    "BASELINE_KINDS", "BaselineConfig", "BaselineVAE", "baseline_loss", "dip_ii_penalty",
    "discriminator_loss", "LossBreakdown", "LossGraph", "kl_anneal_weight", "kl_gaussian",
    "orthogonality_penalty", "reparameterize", "total_correlation_mws", "SEVAE",
    "LatentCodes", "SevaeConfig", "sevae_loss", "MODEL_KINDS", "TrainConfig", "TrainResult",
    "build_model", "load_checkpoint", "model_config", "model_loss", "save_checkpoint", "train",
]
