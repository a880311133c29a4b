"""Variational estimation of thermal density matrices of 1-d Hamiltonians."""

__version__ = "0.1.0"
