"""Multifractal fluctuation analysis and gated hierarchical classification of series."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .mfdfa import DfaConfig, FractalSeries, Variant, compute_hfs  # noqa: E402
from .series import TimeSeries, profile  # noqa: E402

__all__ = ["DfaConfig", "FractalSeries", "TimeSeries", "Variant", "compute_hfs", "profile"]
