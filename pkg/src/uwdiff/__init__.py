"""Conditional diffusion image enhancement with skip sampling."""
__version__ = "0.1.0"
