"""IMEX Runge-Kutta solvers for the BGK equation with positivity and asymptotic preservation."""

__version__ = "0.1.0"
