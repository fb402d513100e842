"""Symbolic analysis toolkit for sequential operation expressions."""

__version__ = "0.1.0"
