"""demrisk: demographic profit decomposition and SCR for non-participating life insurance."""

__version__ = "0.1.0"
