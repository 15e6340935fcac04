"""Joint box+mask VAE baseline: one latent drives both decoders."""

from __future__ import annotations

import torch
import torch.nn as nn

from ..boxvae import BoxDecodeOutput, BoxVAE
from ..labelmapvae import LabelMapVAE
from ..latent import LATENT_DIM, GaussianParams


class BoxMaskVAE(nn.Module):
    """Both stage encoders run side by side; their pooled features fuse into
    a single Gaussian latent decoded simultaneously into boxes and masks."""

    def __init__(self, p_max: int, n_categories: int, latent_dim: int = LATENT_DIM,
                 conv_width: int = 16):
        super().__init__()
        self.p_max = p_max
        self.latent_dim = latent_dim
        self.hparams = {"p_max": p_max, "n_categories": n_categories,
                        "latent_dim": latent_dim, "conv_width": conv_width}
        self.box_stage = BoxVAE(p_max, n_categories, latent_dim=latent_dim)
        self.mask_stage = LabelMapVAE(p_max, n_categories, latent_dim=latent_dim,
                                      conv_width=conv_width)
        fused = 128 + 128  # box trunk feature + mask trunk feature
        self.fuse = nn.Linear(fused, 128)
        self.mu_head = nn.Linear(128, latent_dim)
        self.log_var_head = nn.Linear(128, latent_dim)

    def encode(self, X, A, masks, category, presence) -> GaussianParams:
        h_box = self.box_stage.encode_features(X, A, category)
        h_mask = self.mask_stage.encode_features(masks, X[..., 1:5], presence, category)
        h = torch.relu(self.fuse(torch.cat([h_box, h_mask], dim=-1)))
        return GaussianParams(self.mu_head(h), self.log_var_head(h))

    def decode(self, z, category, presence, boxes) -> tuple[BoxDecodeOutput, torch.Tensor]:
        out = self.box_stage.decode(z, category, presence)
        logits = self.mask_stage.decode(z, boxes, presence, category)
        return out, logits

    def forward(self, X, A, masks, category, presence, eps
                ) -> tuple[BoxDecodeOutput, torch.Tensor, GaussianParams]:
        g = self.encode(X, A, masks, category, presence)
        z = g.mu + g.std * eps
        out, logits = self.decode(z, category, presence, X[..., 1:5])
        return out, logits, g
