"""Sequential baseline: a box LSTM with Gaussian-mixture heads feeding a
shape LSTM that decodes per-part masks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..data.types import Box
from ..labelmapvae import MaskConvDecoder, mask_recon_loss
from ..layout import MASK_SIZE

LSTM_HIDDEN = 32
K_COMPONENTS = 3
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GMMBoxParams:
    """Mixture over one part's box: K weights on the simplex, K x 4 means and
    K x 4 log-scales."""

    weights: torch.Tensor
    means: torch.Tensor
    log_scales: torch.Tensor

    def __post_init__(self):
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValueError("mixture weights must sum to 1")


def gmm_nll(weights: torch.Tensor, means: torch.Tensor, log_scales: torch.Tensor,
            boxes: torch.Tensor, presence: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of ground-truth boxes over present parts.

    weights: (..., p, K); means/log_scales: (..., p, K, 4); boxes: (..., p, 4).
    """
    x = boxes.unsqueeze(-2)  # (..., p, 1, 4)
    log_comp = -0.5 * (((x - means) / log_scales.exp()) ** 2 + LOG_2PI) - log_scales
    log_comp = log_comp.sum(dim=-1)  # (..., p, K)
    log_mix = torch.logsumexp(torch.log(weights.clamp(min=1e-12)) + log_comp, dim=-1)
    n_present = presence.sum(dim=-1).clamp(min=1)
    return -(log_mix * presence).sum(dim=-1) / n_present


def sample_box_from_gmm(params: GMMBoxParams, seed: int | torch.Generator) -> Box:
    """Pick a component by weight, draw a diagonal Gaussian box, clamp to the
    normalized frame. Deterministic in the seed."""
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(seed)
    k = int(torch.multinomial(params.weights, 1, generator=gen))
    eps = torch.randn(4, generator=gen, dtype=params.means.dtype)
    box = params.means[k] + params.log_scales[k].exp() * eps
    box = box.clamp(-1.0, 1.0)
    return Box(*[float(v) for v in box])


class BoxShapeLSTM(nn.Module):
    """Parts are traversed in canonical order by two bidirectional LSTMs, one
    emitting per-part box mixtures, one decoding masks from sampled boxes."""

    def __init__(self, p_max: int, n_categories: int, k_components: int = K_COMPONENTS,
                 hidden: int = LSTM_HIDDEN, conv_width: int = 16):
        super().__init__()
        self.p_max = p_max
        self.n_categories = n_categories
        self.k = k_components
        self.hparams = {"p_max": p_max, "n_categories": n_categories,
                        "k_components": k_components, "hidden": hidden,
                        "conv_width": conv_width}
        box_in = n_categories + 1 + p_max  # category one-hot, presence, part slot
        self.box_lstm = nn.LSTM(box_in, hidden, batch_first=True, bidirectional=True)
        self.head_weights = nn.Linear(2 * hidden, k_components)
        self.head_means = nn.Linear(2 * hidden, 4 * k_components)
        self.head_log_scales = nn.Linear(2 * hidden, 4 * k_components)

        shape_in = box_in + 4
        self.shape_lstm = nn.LSTM(shape_in, hidden, batch_first=True, bidirectional=True)
        self.shape_fc = nn.Linear(2 * hidden, 128)
        self.mask_decoder = MaskConvDecoder(128, conv_width)

    def _tokens(self, category: torch.Tensor, presence: torch.Tensor) -> torch.Tensor:
        B, p = presence.shape
        cat_oh = torch.zeros(B, self.n_categories, dtype=presence.dtype)
        cat_oh.scatter_(1, category.unsqueeze(1), 1.0)
        cat_oh = cat_oh.unsqueeze(1).expand(B, p, self.n_categories)
        slot = torch.eye(p, dtype=presence.dtype).unsqueeze(0).expand(B, p, p)
        return torch.cat([cat_oh, presence.unsqueeze(-1), slot], dim=-1)

    def box_step(self, category: torch.Tensor, presence: torch.Tensor
                 ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(weights, means, log_scales) for every part slot."""
        h, _ = self.box_lstm(self._tokens(category, presence))
        B, p = presence.shape
        weights = torch.softmax(self.head_weights(h), dim=-1)
        means = torch.tanh(self.head_means(h)).reshape(B, p, self.k, 4)
        log_scales = self.head_log_scales(h).clamp(-7.0, 2.0).reshape(B, p, self.k, 4)
        return weights, means, log_scales

    def part_gmm(self, outputs, b: int, part: int) -> GMMBoxParams:
        weights, means, log_scales = outputs
        return GMMBoxParams(weights[b, part].detach(), means[b, part].detach(),
                            log_scales[b, part].detach())

    def shape_step(self, boxes: torch.Tensor, category: torch.Tensor,
                   presence: torch.Tensor) -> torch.Tensor:
        """Mask logits (B, p, 2, 64, 64) conditioned on (sampled) boxes."""
        tokens = torch.cat([self._tokens(category, presence), boxes], dim=-1)
        h, _ = self.shape_lstm(tokens)
        B, p = presence.shape
        feat = torch.relu(self.shape_fc(h)).reshape(B * p, 128)
        return self.mask_decoder(feat).reshape(B, p, 2, MASK_SIZE, MASK_SIZE)


def train_bslstm(corpus, cfg) -> "TrainResult":
    """Supervised training: box mixture NLL plus mask cross-entropy."""
    from ..training import (TrainResult, TrainingDivergenceError, _dump_divergence,
                            _make_optimizer, corpus_tensors, save_checkpoint)

    torch.manual_seed(cfg.seed)
    train = corpus_tensors(corpus, "train", with_masks=True)
    val = corpus_tensors(corpus, "val", with_masks=True)
    if len(val) == 0:
        val = train
    model = BoxShapeLSTM(corpus.schemas.p_max, corpus.schemas.n_categories,
                         **cfg.model_kwargs)
    opt = _make_optimizer(cfg, model.parameters())
    steps_per_epoch = max(1, math.ceil(len(train) / cfg.batch_size))

    def batch_loss(batch):
        boxes = batch.X[..., 1:5]
        gmm = model.box_step(batch.category, batch.presence)
        nll = gmm_nll(gmm[0], gmm[1], gmm[2], boxes, batch.presence).mean()
        logits = model.shape_step(boxes, batch.category, batch.presence)
        ce = mask_recon_loss(logits, batch.masks, batch.presence).mean()
        return nll + ce

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path, last_path = out_dir / "bslstm_best.pt", out_dir / "bslstm_last.pt"
    metrics, best_val = [], float("inf")
    with (out_dir / "metrics_bslstm.jsonl").open("w") as metrics_file:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train))
            model.train()
            epoch_loss = 0.0
            for s in range(steps_per_epoch):
                idx = torch.from_numpy(order[s * cfg.batch_size : (s + 1) * cfg.batch_size].copy())
                batch = train.pick(idx)
                loss = batch_loss(batch)
                if not torch.isfinite(loss):
                    dump = _dump_divergence(cfg, batch, epoch, s)
                    raise TrainingDivergenceError(f"non-finite loss; batch dumped to {dump}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += loss.item()
            model.eval()
            with torch.no_grad():
                val_loss = float(batch_loss(val))
            record = {"epoch": epoch, "train_recon": epoch_loss / steps_per_epoch,
                      "val_recon": val_loss, "kl": 0.0, "lambda": 0.0, "frozen": False}
            metrics.append(record)
            metrics_file.write(json.dumps(record) + "\n")
            if val_loss < best_val:
                best_val = val_loss
                save_checkpoint(model, "bslstm", corpus.schemas, best_path,
                                extra={"epoch": epoch, "baseline": "bslstm"})
    save_checkpoint(model, "bslstm", corpus.schemas, last_path,
                    extra={"baseline": "bslstm"})
    if not best_path.exists():
        save_checkpoint(model, "bslstm", corpus.schemas, best_path,
                        extra={"baseline": "bslstm"})
    return TrainResult(stage="bslstm", best_path=best_path, last_path=last_path,
                       metrics=metrics)
