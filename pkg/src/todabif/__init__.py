"""Numerical toolkit for bifurcating radial solutions of the generalized SU(3) Toda system."""
from __future__ import annotations

__version__ = "0.1.0"
