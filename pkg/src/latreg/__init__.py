"""Latent-space adversarial registration toolkit with a classical baseline."""

__version__ = "0.1.0"
