"""Checking the TSO-CC lazy coherence protocol against TSO via the TSO-LB load-buffer model."""

__version__ = "0.1.0"
