"""HTTP front end: register a case once, then query contingencies against
the shared factorization."""
