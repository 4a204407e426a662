"""Question-type-driven question generation on a small numpy autodiff core."""

__version__ = "0.1.0"
