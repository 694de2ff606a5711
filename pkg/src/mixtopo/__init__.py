"""Thermal Uhlmann topology of non-Hermitian two-, three- and four-band models."""
__version__ = "0.1.0"

from .models import Embedding, Family, ModelSpec  # noqa: E402

__all__ = ["Embedding", "Family", "ModelSpec", "__version__"]
