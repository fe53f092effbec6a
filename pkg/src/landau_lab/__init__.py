"""Numerical laboratory for Landau solutions and their perturbations."""

__version__ = "0.1.0"
