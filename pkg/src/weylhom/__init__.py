"""Numerical workbench for Weyl-homogeneity questions on compact Lie groups."""

__version__ = "0.1.0"
