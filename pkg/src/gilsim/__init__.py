"""Axisymmetric field simulation of HVDC GIL spacers with graded permittivity and conductivity."""

__version__ = "0.1.0"
