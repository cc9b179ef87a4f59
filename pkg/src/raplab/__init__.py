"""Robust RL lab: adversary-population training, baselines, and transfer evaluation."""

__version__ = "0.1.0"
