"""Generate, disentangle and evaluate story salads."""

__version__ = "0.1.0"
