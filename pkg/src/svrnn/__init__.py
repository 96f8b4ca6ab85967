"""Support-augmented variational generators for time-varying threat fields."""

__version__ = "0.1.0"
