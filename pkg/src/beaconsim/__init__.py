"""Batteryless RF-harvesting beacon network: protocol library and simulator."""

__version__ = "0.1.0"

from . import analysis, codec, energy, protocol, radio, simkit  # noqa: F401
