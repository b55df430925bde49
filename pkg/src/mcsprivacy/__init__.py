"""Evaluate location-privacy defenses on crowdsourced measurement traces."""

__version__ = "0.1.0"
