"""Rate-curve fitting and fit reports."""
