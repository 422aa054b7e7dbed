"""Rare-disease detection from medical-code sequences with a semi-supervised GAN."""

__version__ = "0.1.0"
