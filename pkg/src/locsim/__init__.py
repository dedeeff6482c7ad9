"""Discrete-event simulator for PCS location-management schemes."""

__version__ = "0.1.0"
