"""Kac master equation laboratory."""

__version__ = "0.1.0"

from . import chaos, densities, engine, entropy, kac_pde, spectral, streams  # noqa: E402,F401

__all__ = ["chaos", "densities", "engine", "entropy", "kac_pde", "spectral", "streams", "__version__"]
