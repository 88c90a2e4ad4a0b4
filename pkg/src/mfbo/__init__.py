"""Multi-fidelity Bayesian optimization with Gaussian-process surrogates."""
__version__ = "0.1.0"
