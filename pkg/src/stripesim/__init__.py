"""Deterministic simulator of a sub-THz radio stripe: RF over plastic microwave
fiber through daisy-chained radio units, plus low-band assisted beam selection."""

__version__ = "0.1.0"
