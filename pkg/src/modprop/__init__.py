"""Certified numerics for modular propinquity between metrized quantum vector bundles on finite-dimensional C*-algebras."""

__version__ = "0.1.0"
