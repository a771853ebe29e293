"""Linear frequency-response modelling and parameter identification for mixed power systems."""

__version__ = "0.1.0"
