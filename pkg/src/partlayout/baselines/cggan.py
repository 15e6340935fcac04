"""Conditional GAN baseline generating per-pixel label maps in one shot,
sampled through a Gumbel-softmax head."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..layout import PartMaskSet, compose_layout
from .gumbel import gumbel_noise, gumbel_softmax

GAN_CANVAS = 64  # desk-scale label-map resolution


@dataclass(frozen=True)
class GumbelConfig:
    tau: float = 1.0
    anneal_to: Optional[float] = None  # exponential anneal target, if any

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def at(self, step: int, total_steps: int) -> float:
        if self.anneal_to is None or total_steps <= 1:
            return self.tau
        frac = step / (total_steps - 1)
        return self.tau * (self.anneal_to / self.tau) ** frac


class ConditionalGumbelGAN(nn.Module):
    """Generator deconvolves noise + conditioning into (parts + background)
    logits per pixel; the discriminator scores one-hot label maps."""

    def __init__(self, p_max: int, n_categories: int, noise_dim: int = 64, width: int = 16):
        super().__init__()
        self.p_max = p_max
        self.n_categories = n_categories
        self.noise_dim = noise_dim
        self.n_labels = p_max + 1
        self.hparams = {"p_max": p_max, "n_categories": n_categories,
                        "noise_dim": noise_dim, "width": width}
        w = width
        base = GAN_CANVAS // 8
        cond_dim = n_categories + p_max
        self.g_fc = nn.Linear(noise_dim + cond_dim, 4 * w * base * base)
        self.g_up1 = nn.ConvTranspose2d(4 * w, 2 * w, 4, stride=2, padding=1)
        self.g_up2 = nn.ConvTranspose2d(2 * w, w, 4, stride=2, padding=1)
        self.g_up3 = nn.ConvTranspose2d(w, self.n_labels, 4, stride=2, padding=1)
        self._base = base
        self._w = w

        self.d_conv1 = nn.Conv2d(self.n_labels + cond_dim, w, 3, stride=2, padding=1)
        self.d_conv2 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.d_conv3 = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.d_fc = nn.Linear(4 * w * base * base, 1)

    def _cond(self, category: torch.Tensor, parts: torch.Tensor) -> torch.Tensor:
        cat_oh = F.one_hot(category, self.n_categories).to(parts.dtype)
        return torch.cat([cat_oh, parts], dim=-1)

    def generator_logits(self, z: torch.Tensor, category: torch.Tensor,
                         parts: torch.Tensor) -> torch.Tensor:
        """Per-pixel logits (B, labels, H, W) over background + part ids."""
        h = torch.relu(self.g_fc(torch.cat([z, self._cond(category, parts)], dim=-1)))
        h = h.reshape(-1, 4 * self._w, self._base, self._base)
        h = torch.relu(self.g_up1(h))
        h = torch.relu(self.g_up2(h))
        return self.g_up3(h)

    def generate(self, z: torch.Tensor, category: torch.Tensor, parts: torch.Tensor,
                 tau: float = 1.0, generator: torch.Generator | None = None
                 ) -> tuple[torch.Tensor, torch.Tensor]:
        """(soft per-pixel simplex, hard label map) sampled per pixel.

        The conditioning does not hard-constrain the output support: the
        generator can and does emit labels outside the requested part list,
        which is a measured failure mode of this baseline rather than a bug.
        """
        logits = self.generator_logits(z, category, parts)
        h = logits.movedim(1, -1)  # (B, H, W, labels)
        g = gumbel_noise(h.shape, generator=generator, dtype=h.dtype)
        soft = gumbel_softmax(h, g, tau)
        return soft, soft.argmax(dim=-1)

    def discriminate(self, label_onehot: torch.Tensor, category: torch.Tensor,
                     parts: torch.Tensor) -> torch.Tensor:
        cond = self._cond(category, parts)
        cond_maps = cond[:, :, None, None].expand(-1, -1, GAN_CANVAS, GAN_CANVAS)
        h = torch.cat([label_onehot, cond_maps], dim=1)
        h = F.relu(self.d_conv1(h))
        h = F.relu(self.d_conv2(h))
        h = F.relu(self.d_conv3(h))
        return self.d_fc(h.flatten(start_dim=1)).squeeze(-1)

    def generator_parameters(self):
        for name, p in self.named_parameters():
            if name.startswith("g_"):
                yield p

    def discriminator_parameters(self):
        for name, p in self.named_parameters():
            if name.startswith("d_"):
                yield p


def real_label_maps(corpus, split: str) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Compose each instance into a GAN-canvas label map; returns
    (labels (N, H, W) long, category (N,), parts (N, p))."""
    from ..training import category_index
    from ..layout import MASK_SIZE, resize_mask

    instances = corpus.subset(split)
    p_max = corpus.schemas.p_max
    labels = torch.zeros(len(instances), GAN_CANVAS, GAN_CANVAS, dtype=torch.long)
    parts = torch.zeros(len(instances), p_max)
    cats = torch.zeros(len(instances), dtype=torch.long)
    for i, inst in enumerate(instances):
        masks = np.zeros((p_max, MASK_SIZE, MASK_SIZE), dtype=np.float32)
        for k in inst.present_indices:
            masks[k] = resize_mask(inst.part_masks[k])
        layout = compose_layout(
            PartMaskSet(masks=masks, presence=inst.presence.astype(np.float32)),
            inst.part_boxes, canvas=(GAN_CANVAS, GAN_CANVAS),
            category_id=inst.category_id,
        )
        labels[i] = torch.from_numpy(layout.label_map.astype(np.int64))
        parts[i] = torch.from_numpy(inst.presence.astype(np.float32))
        cats[i] = category_index(corpus.schemas, inst.category_id)
    return labels, cats, parts


def cggan_train_step(model: ConditionalGumbelGAN, real_onehot: torch.Tensor,
                     category: torch.Tensor, parts: torch.Tensor,
                     opt_g: torch.optim.Optimizer, opt_d: torch.optim.Optimizer,
                     tau: float) -> dict[str, float]:
    """One alternating discriminator/generator update; returns both losses."""
    B = real_onehot.shape[0]
    z = torch.randn(B, model.noise_dim)
    soft, _ = model.generate(z, category, parts, tau=tau)
    fake = soft.movedim(-1, 1)

    d_real = model.discriminate(real_onehot, category, parts)
    d_fake = model.discriminate(fake.detach(), category, parts)
    d_loss = 0.5 * (
        F.binary_cross_entropy_with_logits(d_real, torch.ones_like(d_real))
        + F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake))
    )
    opt_d.zero_grad()
    d_loss.backward()
    opt_d.step()

    d_fake = model.discriminate(fake, category, parts)
    g_loss = F.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))
    opt_g.zero_grad()
    g_loss.backward()
    opt_g.step()
    return {"d_loss": d_loss.item(), "g_loss": g_loss.item()}


def train_cggan(corpus, cfg) -> "TrainResult":
    from ..training import TrainResult, TrainingDivergenceError, _make_optimizer, save_checkpoint

    torch.manual_seed(cfg.seed)
    labels, cats, parts = real_label_maps(corpus, "train")
    val_labels, val_cats, val_parts = real_label_maps(corpus, "val")
    if val_labels.shape[0] == 0:
        val_labels, val_cats, val_parts = labels, cats, parts
    model = ConditionalGumbelGAN(corpus.schemas.p_max, corpus.schemas.n_categories,
                                 **{k: v for k, v in cfg.model_kwargs.items() if k != "gumbel"})
    gumbel_cfg: GumbelConfig = cfg.model_kwargs.get("gumbel", GumbelConfig())
    opt_g = _make_optimizer(cfg, model.generator_parameters())
    opt_d = _make_optimizer(cfg, model.discriminator_parameters())

    n = labels.shape[0]
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path, last_path = out_dir / "cggan_best.pt", out_dir / "cggan_last.pt"
    metrics = []
    step = 0
    with (out_dir / "metrics_cggan.jsonl").open("w") as metrics_file:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            model.train()
            g_sum = d_sum = 0.0
            for s in range(steps_per_epoch):
                idx = torch.from_numpy(order[s * cfg.batch_size : (s + 1) * cfg.batch_size].copy())
                real = F.one_hot(labels[idx], model.n_labels).movedim(-1, 1).float()
                losses = cggan_train_step(model, real, cats[idx], parts[idx],
                                          opt_g, opt_d, gumbel_cfg.at(step, total_steps))
                if not (math.isfinite(losses["d_loss"]) and math.isfinite(losses["g_loss"])):
                    dump = out_dir / f"divergence_cggan_e{epoch}_s{s}.pt"
                    torch.save({"labels": labels[idx], "epoch": epoch, "step": s}, dump)
                    raise TrainingDivergenceError(f"non-finite GAN loss; dumped to {dump}")
                g_sum += losses["g_loss"]
                d_sum += losses["d_loss"]
                step += 1
            model.eval()
            with torch.no_grad():
                real = F.one_hot(val_labels, model.n_labels).movedim(-1, 1).float()
                d_val = model.discriminate(real, val_cats, val_parts)
                val_d = float(F.binary_cross_entropy_with_logits(d_val, torch.ones_like(d_val)))
            record = {"epoch": epoch, "train_recon": g_sum / steps_per_epoch,
                      "val_recon": val_d, "kl": 0.0, "lambda": 0.0, "frozen": False,
                      "d_loss": d_sum / steps_per_epoch, "g_loss": g_sum / steps_per_epoch}
            metrics.append(record)
            metrics_file.write(json.dumps(record) + "\n")
    save_checkpoint(model, "cggan", corpus.schemas, last_path, extra={"baseline": "cggan"})
    save_checkpoint(model, "cggan", corpus.schemas, best_path, extra={"baseline": "cggan"})
    return TrainResult(stage="cggan", best_path=best_path, last_path=last_path,
                       metrics=metrics)
