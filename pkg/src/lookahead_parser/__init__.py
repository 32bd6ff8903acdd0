"""Beam-search shift-reduce constituent parser with neural lookahead features."""

__version__ = "0.1.0"
