"""Preference-conditioned autoregressive reward models with MoSLoRA adapters."""

__version__ = "0.1.0"
