"""Numerical toolkit for asymptotically Horowitz-Myers metrics and their energy."""
from .errors import AHMError
from .metric import BackgroundParams, Grid, MetricSpec

__version__ = "0.1.0"

__all__ = ["AHMError", "BackgroundParams", "Grid", "MetricSpec", "__version__"]
