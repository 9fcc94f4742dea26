"""Robust high-dimensional inference under elliptical symmetry."""
