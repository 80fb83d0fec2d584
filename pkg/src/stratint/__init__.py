"""Mean-square approximation of iterated Stratonovich integrals and strong
Taylor-Stratonovich schemes of orders 1.0 to 2.5."""

__version__ = "0.1.0"
