"""Symbolic and numeric probes of global injectivity for local diffeomorphisms."""

__version__ = "0.1.0"
