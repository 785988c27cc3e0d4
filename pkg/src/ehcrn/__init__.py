"""Stable-throughput regions, slotted simulation and hybrid access for energy-harvesting cognitive radio."""

__version__ = "0.1.0"
