"""Language-conditioned tracking by detection."""

__version__ = "0.1.0"
