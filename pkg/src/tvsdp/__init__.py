"""Time-varying semidefinite programs with polynomial data."""

__version__ = "0.1.0"
