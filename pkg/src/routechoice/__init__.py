"""Pre-tactical route-choice forecasting for origin-destination flight flows."""

__version__ = "0.1.0"
