"""Dynamic strength estimation and forecasting for ranked competition data."""

__version__ = "0.1.0"
