"""Hierarchical teacher-student environment design with a diffusion world model."""

__version__ = "0.1.0"
