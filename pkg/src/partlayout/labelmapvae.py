"""Conditional VAE over per-part mask sequences.

Encoder: each 64x64 part mask runs through a small conv stack, the per-part
features are aggregated by a bidirectional GRU into H_s (p x 128); box rows
run through a second bidirectional GRU into a p x 8 code lifted row-wise to
H_b (p x 128) which multiplicatively gates H_s. The gated matrix is pooled
across rows, gated by the category embedding and mapped to a 128-d Gaussian.

Decoder: the latent is gated by box and category embeddings, mapped to a
feature replicated once per part slot and fed to a bidirectional GRU whose
per-part hidden states drive mirrored deconv heads emitting two-channel
(background/foreground) logits per pixel. Part-to-part coupling flows through
the recurrent hidden state only; sampled masks are not fed back.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .latent import LATENT_DIM, GaussianParams
from .layout import MASK_SIZE

H_S = 128  # per-part aggregated mask feature width
H_B = 8  # per-part box code width before the row-wise lift


class MaskConvEncoder(nn.Module):
    """64 -> 32 -> 16 -> 8 stride-2 stages (widths 16/32/64), then flatten."""

    def __init__(self, out_dim: int = H_S, width: int = 16):
        super().__init__()
        w = width
        self.conv1 = nn.Conv2d(1, w, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.fc = nn.Linear(4 * w * (MASK_SIZE // 8) ** 2, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.conv1(x))
        h = F.relu(self.conv2(h))
        h = F.relu(self.conv3(h))
        return self.fc(h.flatten(start_dim=1))


class MaskConvDecoder(nn.Module):
    """Mirror of the encoder; emits 2-channel logits at 64x64."""

    def __init__(self, in_dim: int = H_S, width: int = 16):
        super().__init__()
        w = width
        self.base = MASK_SIZE // 8
        self.fc = nn.Linear(in_dim, 4 * w * self.base**2)
        self.up1 = nn.ConvTranspose2d(4 * w, 2 * w, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(2 * w, w, 4, stride=2, padding=1)
        self.up3 = nn.ConvTranspose2d(w, 2, 4, stride=2, padding=1)
        self.width = w

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.fc(h)).reshape(-1, 4 * self.width, self.base, self.base)
        x = F.relu(self.up1(x))
        x = F.relu(self.up2(x))
        return self.up3(x)


class LabelMapVAE(nn.Module):
    def __init__(self, p_max: int, n_categories: int, latent_dim: int = LATENT_DIM,
                 conv_width: int = 16):
        super().__init__()
        self.p_max = p_max
        self.n_categories = n_categories
        self.latent_dim = latent_dim
        self.hparams = {"p_max": p_max, "n_categories": n_categories,
                        "latent_dim": latent_dim, "conv_width": conv_width}

        self.mask_encoder = MaskConvEncoder(H_S, conv_width)
        self.mask_gru = nn.GRU(H_S, H_S // 2, batch_first=True, bidirectional=True)
        self.box_gru = nn.GRU(4, H_B // 2, batch_first=True, bidirectional=True)
        self.box_lift = nn.Linear(H_B, H_S)  # row-wise 1x1 lift to the gate
        self.enc_cat_gate = nn.Embedding(n_categories, H_S)
        self.mu_head = nn.Linear(H_S, latent_dim)
        self.log_var_head = nn.Linear(H_S, latent_dim)

        self.dec_box_gate = nn.Linear(5 * p_max, latent_dim)
        self.dec_cat_gate = nn.Embedding(n_categories, latent_dim)
        self.z_fc = nn.Linear(latent_dim, H_S)
        self.dec_gru = nn.GRU(H_S, H_S // 2, batch_first=True, bidirectional=True)
        self.mask_decoder = MaskConvDecoder(H_S, conv_width)

    # ------------------------------------------------------------------
    def encode_states(self, masks: torch.Tensor, boxes: torch.Tensor,
                      presence: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-part aggregated states: mask features H_s and lifted box
        features H_b, both (B, p, 128).

        masks: (B, p, 64, 64) in [0, 1]; boxes: (B, p, 4); presence: (B, p).
        Absent slots are zeroed before encoding, so stale mask content cannot
        leak in.
        """
        B, p = masks.shape[0], masks.shape[1]
        masks = masks * presence[..., None, None]
        boxes = boxes * presence[..., None]
        per_part = self.mask_encoder(masks.reshape(B * p, 1, MASK_SIZE, MASK_SIZE))
        H_s, _ = self.mask_gru(per_part.reshape(B, p, H_S))
        box_seq, _ = self.box_gru(boxes)
        H_b = self.box_lift(box_seq)
        return H_s, H_b

    def encode_features(self, masks: torch.Tensor, boxes: torch.Tensor,
                        presence: torch.Tensor, category: torch.Tensor) -> torch.Tensor:
        """Pooled, gated feature ahead of the mu/log-var heads."""
        H_s, H_b = self.encode_states(masks, boxes, presence)
        pooled = (H_s * H_b).mean(dim=1)
        return pooled * torch.sigmoid(self.enc_cat_gate(category))

    def encode(self, masks: torch.Tensor, boxes: torch.Tensor, presence: torch.Tensor,
               category: torch.Tensor) -> GaussianParams:
        feat = self.encode_features(masks, boxes, presence, category)
        return GaussianParams(self.mu_head(feat), self.log_var_head(feat))

    def decode(self, z: torch.Tensor, boxes: torch.Tensor, presence: torch.Tensor,
               category: torch.Tensor) -> torch.Tensor:
        """Per-part logits (B, p, 2, 64, 64); channel 1 is foreground."""
        B = z.shape[0]
        cond = torch.cat([presence.unsqueeze(-1), boxes], dim=-1).flatten(start_dim=1)
        gate = torch.sigmoid(self.dec_box_gate(cond)) * torch.sigmoid(self.dec_cat_gate(category))
        z_g = F.relu(self.z_fc(z * gate))
        replicated = z_g.unsqueeze(1).expand(B, self.p_max, H_S)
        hidden, _ = self.dec_gru(replicated.contiguous())
        logits = self.mask_decoder(hidden.reshape(B * self.p_max, H_S))
        return logits.reshape(B, self.p_max, 2, MASK_SIZE, MASK_SIZE)

    def forward(self, masks: torch.Tensor, boxes: torch.Tensor, presence: torch.Tensor,
                category: torch.Tensor, eps: torch.Tensor) -> tuple[torch.Tensor, GaussianParams]:
        g = self.encode(masks, boxes, presence, category)
        z = g.mu + g.std * eps
        return self.decode(z, boxes, presence, category), g


def mask_probs(logits: torch.Tensor) -> torch.Tensor:
    """Per-pixel softmax over (background, foreground); returns the
    foreground probability map with the same leading shape."""
    return torch.softmax(logits, dim=-3)[..., 1, :, :]


def mask_recon_loss(logits: torch.Tensor, targets: torch.Tensor,
                    presence: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel two-class cross-entropy over present parts.

    logits: (..., p, 2, h, w); targets: (..., p, h, w) in {0, 1};
    presence: (..., p). Instances with no present part return 0.
    """
    logp = torch.log_softmax(logits, dim=-3)
    ce = -(targets * logp[..., 1, :, :] + (1.0 - targets) * logp[..., 0, :, :])
    per_part = ce.mean(dim=(-1, -2))
    n_present = presence.sum(dim=-1)
    total = (per_part * presence).sum(dim=-1)
    return total / n_present.clamp(min=1)
