"""Language-based world-model planning toolkit."""

__version__ = "0.1.0"
