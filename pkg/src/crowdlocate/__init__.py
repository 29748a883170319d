"""Crowdsourced fault localization toolkit."""

__version__ = "0.1.0"
