"""Course-specific grade prediction with uncertainty and influence analysis."""

__version__ = "0.1.0"
