"""Grid toolkit for Riesz transforms, Musielak-Orlicz quasi-norms and maximal functions."""

__version__ = "0.1.0"
