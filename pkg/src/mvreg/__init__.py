"""Heteroskedastic mean-variance regression, two ways.

The package fits a mean field and a log-precision field to scattered 1-D
data, either by direct minimization of a discretized smoothness-penalized
likelihood on a lattice (`mvreg.solver`) or by training a pair of small
neural networks (`mvreg.nets`).  `mvreg.sweep` maps out how the fits behave
across the two regularization weights, `mvreg.ensemble` adds a sampling /
ensembling layer with an epistemic-aleatoric split of the predictive
uncertainty, and `mvreg.cli` exposes the whole thing as a command line tool.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
