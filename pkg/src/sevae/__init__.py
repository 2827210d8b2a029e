"""SE-VAE: grouped-indicator variational autoencoders and disentanglement benchmarks."""

__version__ = "0.1.0"
