"""Certified 1-WL-hard SAT graph pairs and message passing networks with random node features."""

__version__ = "0.1.0"
