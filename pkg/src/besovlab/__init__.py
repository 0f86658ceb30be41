"""Littlewood-Paley tools, linear semigroup analysis and a periodic compressible solver."""
__version__ = "0.1.0"
