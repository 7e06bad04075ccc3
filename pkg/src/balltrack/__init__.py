"""Single-ball detection and tracking in video clips."""

__version__ = "0.1.0"
