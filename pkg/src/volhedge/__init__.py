"""Pricing, calibration, scenario generation and dynamic hedging for
European options on volatile underlyings."""

__version__ = "0.1.0"
