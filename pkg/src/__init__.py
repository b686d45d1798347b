"""Source package for the nonlocal evolution toolkit."""
