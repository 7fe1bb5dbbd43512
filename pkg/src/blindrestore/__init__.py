"""Blind image restoration: degradation synthesis, a regression restorer,
a conditioned toy latent diffusion model, and latent-guided sampling."""

__version__ = "0.1.0"
