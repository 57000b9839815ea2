"""Robust covariance estimation and outlier detection for functional data."""
from .core import MrctConfig, MrctResult, mrct_fit
from .funcdata import FunctionalSample, Grid, SubsetH

__all__ = ["FunctionalSample", "Grid", "MrctConfig", "MrctResult", "SubsetH", "mrct_fit"]
__version__ = "0.1.0"
