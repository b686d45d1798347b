"""Utilities package: logging, validation and artifact emission."""
