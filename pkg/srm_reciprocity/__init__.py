"""
Binomial Social Relations Model with dyad-level random slopes.

Fits directed dyadic count data with sender, receiver, dyad intercept, dyad
slope and overdispersion effects, and reports dyadic reciprocity as a function
of a dyad covariate with full posterior uncertainty.
"""

__version__ = "0.3.0"
