"""Ship-wake detection by sparse-regularized inversion of the Radon transform."""

__version__ = "0.1.0"
