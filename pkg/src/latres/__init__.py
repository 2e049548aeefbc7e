"""Lattice Schrödinger resonances via Fourier-side complex distortion.

Numerical toolkit for computing resonances of discrete Schrödinger operators
on ``hZ^d`` and checking their convergence to continuum resonances,
eigenvalues and resolvents as the lattice spacing shrinks.
"""

__version__ = "0.1.0"
