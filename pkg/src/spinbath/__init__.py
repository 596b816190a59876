"""Adiabatic Wigner-trajectory and Born-Markov dynamics of spin chains in harmonic baths."""
__version__ = "0.1.0"
