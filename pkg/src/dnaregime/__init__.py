"""Rates, bounds, simulators and error profiling for constrained versus
unconstrained coding over DNA storage channels."""

from .channels import GrowthModel, quaternary_entropy, substitution_rate

__version__ = "0.1.0"
