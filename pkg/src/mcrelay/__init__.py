"""Monte Carlo simulator for relay-assisted molecular communication via diffusion."""

__version__ = "0.1.0"
