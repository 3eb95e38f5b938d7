"""Homotopy gradient flows between standard and Jacobian-adapted training, with numerical diagnostics."""

__version__ = "0.1.0"
