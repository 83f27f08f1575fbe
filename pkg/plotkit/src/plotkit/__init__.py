"""Figure rendering for gradsamp CSV artifacts."""

__version__ = "0.1.0"
