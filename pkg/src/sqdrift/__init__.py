"""qDRIFT-compiled sample-based Krylov diagonalisation for molecular Hamiltonians."""

__version__ = "0.1.0"
