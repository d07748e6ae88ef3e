"""Tensor-network simulation of dissipative, dipolar-coupled NV-center ensembles."""

__version__ = "0.1.0"
