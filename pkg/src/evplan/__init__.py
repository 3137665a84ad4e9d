"""Decentralized charge planning and cooperative plan selection for EV fleets."""

__version__ = "0.1.0"
