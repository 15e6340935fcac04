"""Objectives, KL annealing with loss-gap freezing, and stage training loops.

The annealing weight ramps linearly to its maximum over the first half of
each cycle, holds for the second half and restarts. Whenever the validation
minus training objective gap exceeds the freeze threshold the weight is held
constant; it resumes the schedule once the gap closes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .boxvae import BoxVAE, boxvae_recon_loss
from .data.augment import AugmentPolicy, augment
from .data.graph import build_part_graph
from .data.schema import SchemaSet
from .data.types import Corpus, NormalizedInstance
from .labelmapvae import LabelMapVAE, mask_recon_loss
from .latent import GaussianParams
from .layout import MASK_SIZE, resize_mask

log = logging.getLogger(__name__)

FREEZE_THRESHOLD = 0.1


class TrainingDivergenceError(RuntimeError):
    """Raised when a loss goes non-finite; the offending batch is dumped."""


# ---------------------------------------------------------------------------
# objective pieces
# ---------------------------------------------------------------------------

def kl_gaussian(g: GaussianParams) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(0, I)), summed over the latent dims."""
    return 0.5 * (torch.exp(g.log_var) + g.mu**2 - 1.0 - g.log_var).sum(dim=-1)


def elbo_loss(recon: torch.Tensor, kl: torch.Tensor, lam: float) -> torch.Tensor:
    """Minimized objective: reconstruction plus weighted KL (negated ELBO
    with a single-sample likelihood estimate)."""
    return recon + lam * kl


def cyclic_beta(step: int, cycle_length: int, lambda_max: float = 1.0) -> float:
    """Linear ramp to lambda_max over the first half-cycle, hold, restart."""
    if cycle_length <= 0:
        raise ValueError("cycle_length must be positive")
    t = (step % cycle_length) / cycle_length
    return lambda_max * min(1.0, 2.0 * t)


@dataclass(frozen=True)
class AnnealState:
    step: int = 0
    lam: float = 0.0
    cycle_length: int = 1000
    lambda_max: float = 1.0
    frozen: bool = False
    threshold: float = FREEZE_THRESHOLD


def advance(state: AnnealState) -> AnnealState:
    """One schedule step; a frozen state keeps its weight."""
    step = state.step + 1
    lam = state.lam if state.frozen else cyclic_beta(step, state.cycle_length, state.lambda_max)
    return dataclasses.replace(state, step=step, lam=lam)


def freeze_gate(train_loss: float, val_loss: float, state: AnnealState) -> AnnealState:
    """Freeze while the val-train gap exceeds the threshold; release (and
    snap back onto the schedule) once it comes back within it."""
    if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
        raise ValueError("freeze_gate requires finite losses")
    gap = val_loss - train_loss
    if gap > state.threshold:
        return dataclasses.replace(state, frozen=True)
    if state.frozen:
        return dataclasses.replace(
            state, frozen=False,
            lam=cyclic_beta(state.step, state.cycle_length, state.lambda_max),
        )
    return state


# ---------------------------------------------------------------------------
# config / checkpoints
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    stage: str
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int = 0
    optimizer: str = "adam"
    lambda_max: float = 1.0
    n_cycles: int = 4
    freeze_threshold: float = FREEZE_THRESHOLD
    out_dir: Path = Path("runs")
    model_kwargs: dict = field(default_factory=dict)
    augment: Optional[AugmentPolicy] = None  # per-epoch train-split augmentation


# canonical presets per stage: (learning rate, epochs, batch, optimizer)
PRESETS: dict[str, tuple[float, int, int, str]] = {
    "boxvae": (1e-4, 300, 32, "adam"),
    "labelmapvae": (1e-3, 110, 8, "adam"),
    "bmvae": (1e-3, 110, 8, "adam"),
    "bslstm": (1e-5, 300, 32, "adam"),
    "cggan": (1e-2, 110, 8, "adagrad"),
}


def preset_config(stage: str, **overrides) -> TrainConfig:
    lr, epochs, batch, opt = PRESETS[stage]
    cfg = TrainConfig(stage=stage, learning_rate=lr, epochs=epochs,
                      batch_size=batch, optimizer=opt)
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def _make_optimizer(cfg: TrainConfig, params) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate)
    if cfg.optimizer == "adagrad":
        return torch.optim.Adagrad(params, lr=cfg.learning_rate)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


def build_model(stage: str, p_max: int, n_categories: int, **kwargs) -> torch.nn.Module:
    if stage == "boxvae":
        return BoxVAE(p_max, n_categories, **kwargs)
    if stage == "labelmapvae":
        return LabelMapVAE(p_max, n_categories, **kwargs)
    if stage == "bmvae":
        from .baselines.bmvae import BoxMaskVAE

        return BoxMaskVAE(p_max, n_categories, **kwargs)
    if stage == "bslstm":
        from .baselines.bslstm import BoxShapeLSTM

        return BoxShapeLSTM(p_max, n_categories, **kwargs)
    if stage == "cggan":
        from .baselines.cggan import ConditionalGumbelGAN

        return ConditionalGumbelGAN(p_max, n_categories, **kwargs)
    raise ValueError(f"unknown stage {stage!r}")


def save_checkpoint(model: torch.nn.Module, stage: str, schema_set: SchemaSet,
                    path: str | Path, extra: Optional[dict] = None) -> Path:
    """Versioned weight blob plus a JSON sidecar for integrity checks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    hparams = dict(getattr(model, "hparams", {}))
    torch.save({"version": 1, "stage": stage, "state_dict": model.state_dict(),
                "hparams": hparams}, path)
    sidecar = {
        "version": 1,
        "stage": stage,
        "schema_hash": schema_set.hash(),
        "latent_dim": hparams.get("latent_dim"),
        "layer_dims": {k: v for k, v in hparams.items() if k != "latent_dim"},
    }
    if extra:
        sidecar.update(extra)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_checkpoint(path: str | Path, schema_set: Optional[SchemaSet] = None
                    ) -> tuple[torch.nn.Module, dict]:
    path = Path(path)
    blob = torch.load(path, map_location="cpu", weights_only=False)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    if schema_set is not None and sidecar["schema_hash"] != schema_set.hash():
        raise ValueError("checkpoint schema hash does not match the active schema set")
    model = build_model(blob["stage"], **blob["hparams"])
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, sidecar


# ---------------------------------------------------------------------------
# corpus tensorization
# ---------------------------------------------------------------------------

def category_index(schemas: SchemaSet, category_id: int) -> int:
    ids = sorted(s.category_id for s in schemas.schemas)
    return ids.index(category_id)


@dataclass
class StageTensors:
    X: torch.Tensor  # (N, p, 5)
    A: torch.Tensor  # (N, p, p)
    category: torch.Tensor  # (N,) long
    presence: torch.Tensor  # (N, p)
    masks: Optional[torch.Tensor] = None  # (N, p, 64, 64)

    def __len__(self) -> int:
        return self.X.shape[0]

    def pick(self, idx) -> "StageTensors":
        return StageTensors(
            X=self.X[idx], A=self.A[idx], category=self.category[idx],
            presence=self.presence[idx],
            masks=None if self.masks is None else self.masks[idx],
        )


def instances_tensors(instances: list[NormalizedInstance], schemas: SchemaSet,
                      with_masks: bool = False,
                      dtype: torch.dtype = torch.float32) -> StageTensors:
    p = schemas.p_max
    n = len(instances)
    X = torch.zeros(n, p, 5, dtype=dtype)
    A = torch.zeros(n, p, p, dtype=dtype)
    cat = torch.zeros(n, dtype=torch.long)
    masks = torch.zeros(n, p, MASK_SIZE, MASK_SIZE, dtype=dtype) if with_masks else None
    for i, inst in enumerate(instances):
        schema = schemas.by_id(inst.category_id)
        g = build_part_graph(inst, schema)
        X[i] = torch.from_numpy(g.X.copy()).to(dtype)
        A[i] = torch.from_numpy(g.A.copy()).to(dtype)
        cat[i] = category_index(schemas, inst.category_id)
        if with_masks:
            for k in inst.present_indices:
                masks[i, k] = torch.from_numpy(
                    resize_mask(inst.part_masks[k]).astype(np.float32)
                ).to(dtype)
    return StageTensors(X=X, A=A, category=cat, presence=X[..., 0].clone(), masks=masks)


def corpus_tensors(corpus: Corpus, split: Optional[str] = None, with_masks: bool = False,
                   dtype: torch.dtype = torch.float32) -> StageTensors:
    instances = corpus.subset(split) if split else corpus.instances
    return instances_tensors(instances, corpus.schemas, with_masks=with_masks, dtype=dtype)


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    stage: str
    best_path: Path
    last_path: Path
    metrics: list[dict]


def _stage_loss(stage: str, model, batch: StageTensors, eps_scale: float):
    """(recon, kl) for the ELBO-trained stages; eps_scale 0 gives the
    deterministic z = mu evaluation path."""
    noise = torch.randn if eps_scale else torch.zeros
    if stage == "boxvae":
        eps = noise((len(batch), model.latent_dim), dtype=batch.X.dtype)
        out, g = model(batch.X, batch.A, batch.category, batch.presence, eps)
        recon, _ = boxvae_recon_loss(out, batch.X, batch.A)
    elif stage == "labelmapvae":
        eps = noise((len(batch), model.latent_dim), dtype=batch.X.dtype)
        logits, g = model(batch.masks, batch.X[..., 1:5], batch.presence, batch.category, eps)
        recon = mask_recon_loss(logits, batch.masks, batch.presence)
    elif stage == "bmvae":
        eps = noise((len(batch), model.latent_dim), dtype=batch.X.dtype)
        out, logits, g = model(batch.X, batch.A, batch.masks, batch.category,
                               batch.presence, eps)
        box_recon, _ = boxvae_recon_loss(out, batch.X, batch.A)
        recon = box_recon + mask_recon_loss(logits, batch.masks, batch.presence)
    else:
        raise ValueError(f"stage {stage!r} is not ELBO-trained")
    return recon.mean(), kl_gaussian(g).mean()


def _dump_divergence(cfg: TrainConfig, batch: StageTensors, epoch: int, step: int) -> Path:
    dump = Path(cfg.out_dir) / f"divergence_{cfg.stage}_e{epoch}_s{step}.pt"
    dump.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"X": batch.X, "A": batch.A, "category": batch.category,
                "masks": batch.masks, "epoch": epoch, "step": step}, dump)
    return dump


def train_stage(corpus: Corpus, stage: str, config: Optional[TrainConfig] = None) -> TrainResult:
    """Train one stage on the corpus's train split, validating per epoch.

    Deterministic in config.seed. Logs one JSONL record per epoch and writes
    best-validation and last checkpoints under config.out_dir.
    """
    cfg = config or preset_config(stage)
    if stage == "cggan":
        from .baselines.cggan import train_cggan

        return train_cggan(corpus, cfg)
    if stage == "bslstm":
        from .baselines.bslstm import train_bslstm

        return train_bslstm(corpus, cfg)

    torch.manual_seed(cfg.seed)
    with_masks = stage in ("labelmapvae", "bmvae")
    train_instances = corpus.subset("train")
    clean_train = corpus_tensors(corpus, "train", with_masks=with_masks)
    train = clean_train
    val = corpus_tensors(corpus, "val", with_masks=with_masks)
    if len(val) == 0:
        log.warning("empty validation split; validating on the train split")
        val = clean_train
    model = build_model(stage, corpus.schemas.p_max, corpus.schemas.n_categories,
                        **cfg.model_kwargs)
    opt = _make_optimizer(cfg, model.parameters())

    steps_per_epoch = max(1, math.ceil(len(train) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    state = AnnealState(cycle_length=max(1, math.ceil(total_steps / cfg.n_cycles)),
                        lambda_max=cfg.lambda_max, threshold=cfg.freeze_threshold)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / f"metrics_{stage}.jsonl"
    best_path = out_dir / f"{stage}_best.pt"
    last_path = out_dir / f"{stage}_last.pt"
    best_val = float("inf")
    metrics: list[dict] = []

    with metrics_path.open("w") as metrics_file:
        for epoch in range(cfg.epochs):
            if cfg.augment is not None:
                jittered = [
                    augment(inst, seed=cfg.seed * 1_000_003 + epoch * 1009 + i,
                            policy=cfg.augment)
                    for i, inst in enumerate(train_instances)
                ]
                train = instances_tensors(jittered, corpus.schemas, with_masks=with_masks)
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train))
            model.train()
            epoch_recon = epoch_kl = epoch_total = 0.0
            for s in range(steps_per_epoch):
                idx = torch.from_numpy(order[s * cfg.batch_size : (s + 1) * cfg.batch_size].copy())
                batch = train.pick(idx)
                recon, kl = _stage_loss(stage, model, batch, eps_scale=1.0)
                loss = elbo_loss(recon, kl, state.lam)
                if not torch.isfinite(loss):
                    dump = _dump_divergence(cfg, batch, epoch, s)
                    raise TrainingDivergenceError(
                        f"non-finite loss at epoch {epoch} step {s}; batch dumped to {dump}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_recon += recon.item()
                epoch_kl += kl.item()
                epoch_total += loss.item()
                state = advance(state)

            model.eval()
            with torch.no_grad():
                val_recon, val_kl = _stage_loss(stage, model, val, eps_scale=0.0)
                if cfg.augment is not None:
                    # augmented batches are harder than the clean val split, so
                    # gate on a clean-train evaluation to keep the gap comparable
                    gate_recon, gate_kl = _stage_loss(stage, model, clean_train, eps_scale=0.0)
                    train_total = float(elbo_loss(gate_recon, gate_kl, state.lam))
                else:
                    train_total = epoch_total / steps_per_epoch
            val_total = float(elbo_loss(val_recon, val_kl, state.lam))
            state = freeze_gate(train_total, val_total, state)

            record = {
                "epoch": epoch,
                "train_recon": epoch_recon / steps_per_epoch,
                "val_recon": float(val_recon),
                "kl": epoch_kl / steps_per_epoch,
                "lambda": state.lam,
                "frozen": state.frozen,
            }
            metrics.append(record)
            metrics_file.write(json.dumps(record) + "\n")

            if val_total < best_val:
                best_val = val_total
                save_checkpoint(model, stage, corpus.schemas, best_path,
                                extra={"epoch": epoch, "val_total": val_total})

    save_checkpoint(model, stage, corpus.schemas, last_path,
                    extra={"epoch": cfg.epochs - 1})
    if not best_path.exists():
        save_checkpoint(model, stage, corpus.schemas, best_path)
    return TrainResult(stage=stage, best_path=best_path, last_path=last_path, metrics=metrics)
