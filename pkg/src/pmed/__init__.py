"""Privacy-preserving treatment recommendation over a two-server threshold Paillier setup."""

__version__ = "0.1.0"
