"""Topology-preserving blending of implicit porous structures."""

__version__ = "0.1.0"
