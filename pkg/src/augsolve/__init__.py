"""Fast solution updates for sparse symmetric systems under
principal-submatrix modification, with a DC power-grid front end."""

__version__ = "0.1.0"
