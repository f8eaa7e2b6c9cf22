"""Learn reversible input/output behavior models of black-box programs."""

__version__ = "0.1.0"
