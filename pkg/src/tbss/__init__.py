"""Tube beam stack search reconstruction of tubular boundary segmentations."""

from .search import SearchParams, reconstruct_artery, search_section

__all__ = ["SearchParams", "reconstruct_artery", "search_section"]
__version__ = "0.1.0"
