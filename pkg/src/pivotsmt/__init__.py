"""Desk-scale phrase-based SMT with pivot triangulation and transliteration mining."""

__version__ = "0.1.0"
