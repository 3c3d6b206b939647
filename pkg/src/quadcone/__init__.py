"""Numerical toolkit for square-function and wave-envelope geometry of
quadratic manifolds and their conical extensions."""

__version__ = "0.1.0"

from .quadform import QuadraticSystem, frame_at, certify_transversality, get_system

__all__ = ["QuadraticSystem", "frame_at", "certify_transversality", "get_system",
           "__version__"]
