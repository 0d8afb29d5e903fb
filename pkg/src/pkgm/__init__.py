"""Knowledge graph pre-training and knowledge serving toolkit."""

__version__ = "0.1.0"
