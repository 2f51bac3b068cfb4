"""Conditional neural-network eigensolver for parameterized Sturm-Liouville problems.

A tanh network, optionally fed extra *tag* inputs that select one problem from
a family, is trained to minimize a penalized Rayleigh quotient evaluated by
quasi-Monte-Carlo quadrature on Sobol points.  The lowest eigenvalue of any
member of the family then follows from a single forward pass.
"""

__version__ = "0.1.0"
