"""Graph convolution primitives: symmetric-normalized propagation with ReLU.

All functions are pure over their tensor inputs and accept an optional
leading batch dimension.
"""

from __future__ import annotations

import torch
import torch.nn as nn

F0 = 5  # node feature width: presence bit + 4 box coordinates


def normalize_adjacency(A: torch.Tensor) -> torch.Tensor:
    """D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.

    A must be symmetric with a zero diagonal; self-loops guarantee every
    degree is >= 1 so the result is always finite. Accepts (p, p) or
    (batch, p, p).
    """
    eye = torch.eye(A.shape[-1], dtype=A.dtype, device=A.device)
    A_tilde = A + eye
    deg = A_tilde.sum(dim=-1)
    d_inv_sqrt = deg.rsqrt()
    return A_tilde * d_inv_sqrt.unsqueeze(-1) * d_inv_sqrt.unsqueeze(-2)


def gcn_layer(H: torch.Tensor, A_hat: torch.Tensor, W: torch.Tensor) -> torch.Tensor:
    """ReLU(A_hat @ H @ W)."""
    return torch.relu(A_hat @ H @ W)


class GCNWeights(nn.Module):
    """Two stacked propagation layers (widths F0 -> f1 -> f2), no biases."""

    def __init__(self, f1: int = 32, f2: int = 64, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.W1 = nn.Parameter(_fan_uniform(F0, f1, dtype))
        self.W2 = nn.Parameter(_fan_uniform(f1, f2, dtype))

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]


def _fan_uniform(fan_in: int, fan_out: int, dtype: torch.dtype) -> torch.Tensor:
    bound = (6.0 / (fan_in + fan_out)) ** 0.5
    return torch.empty(fan_in, fan_out, dtype=dtype).uniform_(-bound, bound)


def gcn_forward(X: torch.Tensor, A: torch.Tensor, weights: GCNWeights) -> torch.Tensor:
    """Two propagation layers sharing one normalized adjacency; H0 = X."""
    A_hat = normalize_adjacency(A)
    H1 = gcn_layer(X, A_hat, weights.W1)
    return gcn_layer(H1, A_hat, weights.W2)
