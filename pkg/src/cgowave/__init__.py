"""Complex geometric optics solutions and Fourier recovery for magnetic
Schrodinger operators on closed waveguides, at desk scale."""

__version__ = "0.1.0"
