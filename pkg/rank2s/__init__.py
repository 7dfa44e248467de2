"""rank2s package."""

__all__ = ["data", "stats", "null", "sim", "utils", "cli"]

__version__ = "0.1.0"
