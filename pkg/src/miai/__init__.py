"""Black-box model inversion attribute inference attacks on tabular classifiers."""

__version__ = "0.1.0"
