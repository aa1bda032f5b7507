"""Single-atom laser with a strongly driven dressed atom in a good cavity.

Stationary state, cavity output and lower-sideband fluorescence spectra from a
block-tridiagonal recurrence, with a dense reference solver and the secular
ladder picture for interpretation.
"""

__version__ = "0.1.0"
