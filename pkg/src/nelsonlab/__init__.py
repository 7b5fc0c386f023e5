"""Numerical laboratory for translation-invariant Nelson-type fiber
Hamiltonians on truncated Fock spaces."""

__version__ = "0.1.0"
