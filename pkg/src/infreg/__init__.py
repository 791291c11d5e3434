"""Information-regularized counterfactual estimation toolkit."""

__version__ = "0.1.0"
