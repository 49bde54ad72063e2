"""Analysis of monotonicity constraint transition systems."""
