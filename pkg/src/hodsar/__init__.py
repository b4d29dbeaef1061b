"""Simulation and analysis toolkit for acoustically driven, optically detected
triplet spin resonance in doped molecular films."""

__version__ = "0.1.0"
