"""Gumbel-softmax relaxation for categorical sampling."""

from __future__ import annotations

import torch

EPS = 1e-20


def gumbel_noise(shape, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Standard Gumbel(0, 1) draws: -ln(-ln U)."""
    u = torch.rand(shape, generator=generator, dtype=dtype)
    return -torch.log(-torch.log(u + EPS) + EPS)


def gumbel_softmax(h: torch.Tensor, g: torch.Tensor, tau: float) -> torch.Tensor:
    """softmax((h + g) / tau) along the last dim.

    As tau grows the output flattens toward uniform; as tau -> 0 it
    approaches the one-hot of argmax(h + g), whose marginal matches
    softmax(h) exactly.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return torch.softmax((h + g) / tau, dim=-1)


def gumbel_argmax(h: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Hard categorical sample via argmax(h + g)."""
    return (h + g).argmax(dim=-1)
