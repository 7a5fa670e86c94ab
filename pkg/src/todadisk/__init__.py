"""Harmonic-metric PDE systems of cyclic and subcyclic Higgs bundles on the Poincare disk."""

__version__ = "0.1.0"
