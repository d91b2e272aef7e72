"""Deterministic construction of small distributions fooling finite automata."""
__version__ = "0.1.0"
