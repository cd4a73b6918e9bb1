"""Lower tails of the Galton-Watson martingale limit and the conditioned tree."""

from .offspring import OffspringDistribution, new_distribution, pgf_eval, pgf_iterate, pgf_prime
from .analytic import AnalyticConfig, SaddleSolution

__version__ = "0.1.0"
