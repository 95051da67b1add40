"""Edge-coverage-based task distribution for parallel fuzzing."""

__version__ = "0.1.0"
