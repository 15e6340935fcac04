"""Diagonal-Gaussian latent utilities shared by both generative stages."""

from __future__ import annotations

from dataclasses import dataclass

import torch

LATENT_DIM = 128


@dataclass
class GaussianParams:
    """Mean / log-variance of a diagonal Gaussian posterior."""

    mu: torch.Tensor
    log_var: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ValueError("mu and log_var must share a shape")

    @property
    def std(self) -> torch.Tensor:
        return torch.exp(0.5 * self.log_var)


def rng(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def reparameterize(g: GaussianParams, seed: int | torch.Generator | None = None) -> torch.Tensor:
    """z = mu + std * eps with eps ~ N(0, I); deterministic when seeded."""
    gen = rng(seed) if isinstance(seed, int) else seed
    eps = torch.randn(g.mu.shape, generator=gen, dtype=g.mu.dtype, device=g.mu.device)
    return g.mu + g.std * eps


def sample_prior(shape, seed: int | torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32) -> torch.Tensor:
    gen = rng(seed) if isinstance(seed, int) else seed
    return torch.randn(shape, generator=gen, dtype=dtype)
