"""Confidence-weighted RGB-only dense SLAM backend with a deformable Gaussian-splat map."""

__version__ = "0.1.0"
