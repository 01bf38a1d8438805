"""Hybrid gradient/swarm architecture search.

A three-stage optimizer: weight-only warm-up of a differentiable supernet,
swarm-based exploration of architecture parameters with diversity-aware
fitness, and a gradient stabilization stage with a statistically justified
early stop.  Works against either a small differentiable supernet on
synthetic data or a finite tabular space with a brute-force oracle.
"""

__version__ = "0.1.0"
