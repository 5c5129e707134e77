"""Descriptor-guided multimodal optimisation of spherical lens systems."""

__version__ = "0.1.0"
