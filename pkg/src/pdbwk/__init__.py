"""Primal-dual bandits with knapsacks: LP diagnostics, policies and simulation."""

__version__ = "0.1.0"
