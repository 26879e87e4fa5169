"""Hetero-functional network minimum cost flow: nets, incidence tensors, QP assembly and solve."""

__version__ = "1.0.0"
