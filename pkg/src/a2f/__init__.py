"""Attribute-to-face synthesis via sketches: CVAE + two GAN stages."""

__version__ = "0.1.0"
