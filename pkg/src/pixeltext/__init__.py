"""Label generation, decoding, losses and evaluation for skeleton + directional-region text detection."""

__version__ = "0.1.0"
