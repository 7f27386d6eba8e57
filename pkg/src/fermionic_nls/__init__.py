"""Ground states of the two-orbital focusing NLS energy in one dimension."""

__version__ = "0.1.0"
