"""Tabular laboratory for single-goal contrastive RL."""

__version__ = "0.1.0"

from ._kernels import backend_name

__all__ = ["__version__", "backend_name"]
