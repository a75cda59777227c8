"""mcf-nav: multiplicative fusion of a classical navigation prior with a learned policy."""

__version__ = "1.0.0"

from .gaussfuse import DiagGaussian2, Gaussian1, fuse_gated, fuse_product

__all__ = ["DiagGaussian2", "Gaussian1", "__version__", "fuse_gated", "fuse_product"]
