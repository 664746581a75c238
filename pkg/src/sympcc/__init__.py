"""Symplectic path indices and closed characteristics on convex
cyclic-symmetric hypersurfaces."""

__version__ = "0.1.0"
