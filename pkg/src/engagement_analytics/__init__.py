"""
Community-engagement analytics for open-source repositories.

This package computes per-month engagement and dynamics metrics for GitHub
repositories and runs the statistical pipeline built on them: distribution
fitting, exploratory factor analysis, rank correlations with bootstrap tests,
log-OLS regression with age interactions and lifespan-quartile comparisons.
"""

__version__ = "0.4.0"
