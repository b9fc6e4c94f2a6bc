"""Corner-kick count forecasting with discrete compound Poisson models."""

__version__ = "0.1.0"
