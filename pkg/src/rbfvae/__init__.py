"""Long-term hourly wind/solar scenario generation with an RBF-kernel VAE."""

__version__ = "0.1.0"
