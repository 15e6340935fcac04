"""Conditional VAE over part-labelled bounding-box graphs.

Encoder: two-layer GCN over (X, A), mean-pooled, multiplicatively gated by a
category embedding, concatenated with per-part skip features of the box
sub-matrix. Decoder: latent gated by category and part-presence embeddings,
then a feed-forward stack emitting presence probabilities, tanh box corners
and a symmetrized adjacency.

The reconstruction loss combines a factored-Bernoulli presence term, per-box
MSE + log-IoU terms, a pairwise center-distance term and an adjacency BCE,
each normalized by the fixed maximum part count (or its square / pair count).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .gcn import GCNWeights, gcn_forward
from .latent import LATENT_DIM, GaussianParams

EPS_IOU = 1e-6  # floor for IoU before the log
EPS_PROB = 1e-7  # probability clamp for Bernoulli/BCE terms


@dataclass
class BoxDecodeOutput:
    presence_probs: torch.Tensor  # (..., p) in (0, 1)
    boxes_hat: torch.Tensor  # (..., p, 4) in [-1, 1]
    adjacency_probs: torch.Tensor  # (..., p, p), symmetric


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def clamp_probs(p: torch.Tensor, eps: float = EPS_PROB) -> torch.Tensor:
    return p.clamp(eps, 1.0 - eps)


def presence_nll(D: torch.Tensor, l_c: torch.Tensor) -> torch.Tensor:
    """Negative log of the factored Bernoulli part-presence likelihood,
    normalized by the maximum part count. Reduces the last dim."""
    D = clamp_probs(D)
    ll = l_c * torch.log(D) + (1.0 - l_c) * torch.log(1.0 - D)
    return -ll.sum(dim=-1) / D.shape[-1]


def box_iou(b_hat: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """IoU of corner-form boxes, last dim (x_min, y_min, x_max, y_max).

    Degenerate predictions (inverted corners) contribute zero area, so the
    result stays in [0, 1] whenever the ground-truth box is valid.
    """
    ix = (torch.minimum(b_hat[..., 2], b[..., 2]) - torch.maximum(b_hat[..., 0], b[..., 0])).clamp(min=0)
    iy = (torch.minimum(b_hat[..., 3], b[..., 3]) - torch.maximum(b_hat[..., 1], b[..., 1])).clamp(min=0)
    inter = ix * iy
    area_hat = (b_hat[..., 2] - b_hat[..., 0]).clamp(min=0) * (b_hat[..., 3] - b_hat[..., 1]).clamp(min=0)
    area_gt = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    # clamp only guards the all-zero rows of absent parts (0/0); any valid
    # ground-truth box keeps the union strictly positive
    return inter / (area_hat + area_gt - inter).clamp(min=1e-12)


def box_iou_loss(b_hat: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """-ln IoU, floored at EPS_IOU so disjoint boxes stay finite."""
    return -torch.log(box_iou(b_hat, b).clamp(min=EPS_IOU))


def box_mse(b_hat: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((b_hat - b) ** 2).sum(dim=-1)


def _center_distances(boxes: torch.Tensor) -> torch.Tensor:
    c = (boxes[..., 0:2] + boxes[..., 2:4]) / 2.0
    diff = c.unsqueeze(-2) - c.unsqueeze(-3)
    # tiny offset keeps the sqrt gradient bounded at coincident centers
    return torch.sqrt((diff**2).sum(dim=-1) + 1e-12)


def pairwise_center_loss(boxes_hat: torch.Tensor, boxes: torch.Tensor,
                         presence: torch.Tensor) -> torch.Tensor:
    """Squared difference of center distances over ordered present pairs,
    normalized by p*(p-1). Zero when fewer than two parts are present."""
    p = boxes.shape[-2]
    d_hat = _center_distances(boxes_hat)
    d = _center_distances(boxes)
    pair_mask = presence.unsqueeze(-1) * presence.unsqueeze(-2)
    pair_mask = pair_mask * (1.0 - torch.eye(p, dtype=boxes.dtype, device=boxes.device))
    return ((d - d_hat) ** 2 * pair_mask).sum(dim=(-1, -2)) / max(p * (p - 1), 1)


def adjacency_bce(A_probs: torch.Tensor, A: torch.Tensor) -> torch.Tensor:
    """Element-wise binary cross-entropy over all p^2 entries, / p^2."""
    p = A.shape[-1]
    q = clamp_probs(A_probs)
    bce = -(A * torch.log(q) + (1.0 - A) * torch.log(1.0 - q))
    return bce.sum(dim=(-1, -2)) / (p * p)


def boxvae_recon_loss(out: BoxDecodeOutput, X: torch.Tensor, A: torch.Tensor
                      ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Total reconstruction loss plus the per-term breakdown.

    X is the target feature matrix (..., p, 5), A the target adjacency.
    MSE/IoU terms are evaluated only where the target part is present (absent
    rows have no defined box) while every denominator stays at the fixed part
    count, so terms remain comparable across instances.
    """
    presence = X[..., 0]
    boxes = X[..., 1:5]
    p = X.shape[-2]

    term_presence = presence_nll(out.presence_probs, presence)
    per_box = (box_mse(out.boxes_hat, boxes) + box_iou_loss(out.boxes_hat, boxes)) * presence
    term_boxes = per_box.sum(dim=-1) / p
    term_centers = pairwise_center_loss(out.boxes_hat, boxes, presence)
    term_adjacency = adjacency_bce(out.adjacency_probs, A.to(X.dtype))

    total = term_presence + term_boxes + term_centers + term_adjacency
    return total, {
        "presence": term_presence,
        "boxes": term_boxes,
        "centers": term_centers,
        "adjacency": term_adjacency,
    }


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class BoxVAE(nn.Module):
    """Box-graph stage: class- and part-conditioned latent over layouts."""

    def __init__(self, p_max: int, n_categories: int, latent_dim: int = LATENT_DIM,
                 gcn_widths: tuple[int, int] = (32, 64), skip_dim: int = 8,
                 enc_hidden: int = 128, dec_hidden: int = 256):
        super().__init__()
        self.p_max = p_max
        self.n_categories = n_categories
        self.latent_dim = latent_dim
        self.hparams = {"p_max": p_max, "n_categories": n_categories,
                        "latent_dim": latent_dim, "gcn_widths": tuple(gcn_widths),
                        "skip_dim": skip_dim, "enc_hidden": enc_hidden,
                        "dec_hidden": dec_hidden}

        self.gcn = GCNWeights(*gcn_widths)
        # per-part 1x1 transform of the box sub-matrix; kept separate from the
        # pooled path so box detail reaches the head undiluted
        self.skip = nn.Linear(4, skip_dim)
        self.enc_cat_gate = nn.Embedding(n_categories, gcn_widths[1])
        self.enc_fc = nn.Linear(gcn_widths[1] + skip_dim * p_max, enc_hidden)
        self.mu_head = nn.Linear(enc_hidden, latent_dim)
        self.log_var_head = nn.Linear(enc_hidden, latent_dim)

        self.dec_cat_gate = nn.Embedding(n_categories, latent_dim)
        self.dec_parts_gate = nn.Linear(p_max, latent_dim)
        self.dec_fc1 = nn.Linear(latent_dim, dec_hidden)
        self.dec_fc2 = nn.Linear(dec_hidden, dec_hidden)
        self.head_presence = nn.Linear(dec_hidden, p_max)
        self.head_boxes = nn.Linear(dec_hidden, 4 * p_max)
        self.head_adjacency = nn.Linear(dec_hidden, p_max * p_max)

    def skip_features(self, X_bb: torch.Tensor) -> torch.Tensor:
        """Row-local features of the (..., p, 4) box sub-matrix."""
        return self.skip(X_bb)

    def encode_features(self, X: torch.Tensor, A: torch.Tensor,
                        category: torch.Tensor) -> torch.Tensor:
        """Fused encoder feature ahead of the mu/log-var heads."""
        h = gcn_forward(X, A.to(X.dtype), self.gcn)
        pooled = h.mean(dim=-2)
        gate = torch.sigmoid(self.enc_cat_gate(category))
        skip = self.skip_features(X[..., 1:5]).flatten(start_dim=-2)
        fused = torch.cat([pooled * gate, skip], dim=-1)
        return torch.relu(self.enc_fc(fused))

    def encode(self, X: torch.Tensor, A: torch.Tensor,
               category: torch.Tensor) -> GaussianParams:
        feat = self.encode_features(X, A, category)
        return GaussianParams(self.mu_head(feat), self.log_var_head(feat))

    def decode(self, z: torch.Tensor, category: torch.Tensor,
               parts: torch.Tensor) -> BoxDecodeOutput:
        """parts is the requested part-presence vector (..., p_max)."""
        gate = torch.sigmoid(self.dec_cat_gate(category)) * torch.sigmoid(self.dec_parts_gate(parts))
        h = torch.relu(self.dec_fc1(z * gate))
        h = torch.relu(self.dec_fc2(h))
        presence = torch.sigmoid(self.head_presence(h))
        boxes = torch.tanh(self.head_boxes(h)).reshape(*h.shape[:-1], self.p_max, 4)
        logits = self.head_adjacency(h).reshape(*h.shape[:-1], self.p_max, self.p_max)
        logits = (logits + logits.transpose(-1, -2)) / 2.0
        return BoxDecodeOutput(presence, boxes, torch.sigmoid(logits))

    def forward(self, X: torch.Tensor, A: torch.Tensor, category: torch.Tensor,
                parts: torch.Tensor, eps: torch.Tensor) -> tuple[BoxDecodeOutput, GaussianParams]:
        g = self.encode(X, A, category)
        z = g.mu + g.std * eps
        return self.decode(z, category, parts), g
