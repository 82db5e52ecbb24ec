"""Final-state scattering for nonlinear Schrodinger equations on periodic grids."""

__version__ = "0.1.0"
