"""Numerical laboratory for zero-average Gaussian free fields on regular graphs.

Provides graph construction, exact and walk-decomposition field samplers,
the tree field with its branching operators, the graph/tree coupling, and
level-set percolation experiments (giant component, mesoscopic counts,
sprinkling merges).
"""

__version__ = "0.1.0"
