"""Texture description toolkit: local descriptors, BoVW/VLAD/Fisher encodings,
kernel SVMs, describable-attribute features and crowd-annotation tools."""

__version__ = "0.1.0"
