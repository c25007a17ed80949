"""Hybrid graph + text recommender with desk-scale efficiency tooling."""

from fuserec.kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
