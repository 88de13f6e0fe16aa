"""Per-run algorithm selection for continuous black-box optimization."""

__version__ = "0.1.0"
