"""Antisymmetric separated representations of many-electron wavefunctions:
sums of Slater determinants fitted by alternating least squares inside a
Green's-function iteration, with inner products evaluated in closed form."""

__version__ = "0.1.0"
