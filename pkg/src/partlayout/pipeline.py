"""End-to-end generation and interactive modification.

Flow: latent draw -> box-graph decode -> (requested parts override decoded
presence) -> mask decode conditioned on the boxes -> label-map composition.
Both latent draws derive deterministically from the request seed, so edits
that keep the seed regenerate byte-identical masks for untouched boxes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import torch

from .boxvae import BoxVAE
from .data.augment import MIN_BOX_SIZE
from .data.graph import adjacency_rules
from .data.schema import PartSchema, SchemaSet
from .data.types import Box, NormalizedInstance, PartGraph
from .labelmapvae import LabelMapVAE, mask_probs
from .latent import reparameterize, rng, sample_prior
from .layout import (
    CANVAS_SIZE,
    MASK_SIZE,
    ObjectLayout,
    PartMaskSet,
    compose_layout,
    paste_order,
    resize_mask,
)
from .training import category_index

log = logging.getLogger(__name__)


class RejectedEditError(ValueError):
    """An edit command failed validation; the reason is the message."""


@dataclass(frozen=True)
class GenerationRequest:
    category_id: int
    part_names: tuple[str, ...]
    seed: int = 0
    fixed_boxes: Optional[dict[int, Box]] = None
    canvas: tuple[int, int] = (CANVAS_SIZE, CANVAS_SIZE)


@dataclass(frozen=True)
class EditCommand:
    kind: Literal["set_box", "add_part", "remove_part"]
    part_index: int = -1
    box: Optional[Box] = None
    part_name: Optional[str] = None


@dataclass
class GenerateResult:
    graph: PartGraph
    layout: ObjectLayout
    boxes: dict[int, Box]
    masks: PartMaskSet
    forced_parts: list[int] = field(default_factory=list)


def _derived_seed(seed: int, role: int) -> int:
    # distinct deterministic streams for the box and mask draws
    return (int(seed) * 1000003 + role) & 0x7FFFFFFF


def sanitize_box(raw, lo: float = -1.0, hi: float = 1.0) -> Box:
    """Order the corners, clamp to the frame and enforce the minimum size so
    decoded coordinates always form a usable box."""
    x0, y0, x1, y1 = (float(v) for v in raw)
    x0, x1 = min(x0, x1), max(x0, x1)
    y0, y1 = min(y0, y1), max(y0, y1)
    if x1 - x0 < MIN_BOX_SIZE:
        cx = (x0 + x1) / 2
        x0, x1 = cx - MIN_BOX_SIZE / 2, cx + MIN_BOX_SIZE / 2
    if y1 - y0 < MIN_BOX_SIZE:
        cy = (y0 + y1) / 2
        y0, y1 = cy - MIN_BOX_SIZE / 2, cy + MIN_BOX_SIZE / 2
    return Box(max(lo, x0), max(lo, y0), min(hi, x1), min(hi, y1))


def _request_presence(req: GenerationRequest, schema: PartSchema) -> tuple[np.ndarray, list[int]]:
    idx = [schema.part_index(name) for name in req.part_names]
    pres = np.zeros(schema.p_max, dtype=np.float32)
    pres[idx] = 1.0
    return pres, idx


def _boxes_tensor(boxes: dict[int, Box], p_max: int, dtype) -> torch.Tensor:
    t = torch.zeros(p_max, 4, dtype=dtype)
    for k, b in boxes.items():
        t[k] = torch.tensor([b.x_min, b.y_min, b.x_max, b.y_max], dtype=dtype)
    return t


def _decode_masks(mask_model: LabelMapVAE, z: torch.Tensor, boxes: dict[int, Box],
                  presence: np.ndarray, cat_idx: int) -> PartMaskSet:
    dtype = z.dtype
    pres_t = torch.from_numpy(presence).to(dtype).unsqueeze(0)
    boxes_t = _boxes_tensor(boxes, len(presence), dtype).unsqueeze(0)
    cat_t = torch.tensor([cat_idx])
    with torch.no_grad():
        logits = mask_model.decode(z, boxes_t, pres_t, cat_t)
        probs = mask_probs(logits)[0].numpy()
    probs = probs * presence[:, None, None]
    return PartMaskSet(masks=probs.astype(np.float32), presence=presence.copy())


def _graph_from_decode(out, boxes: dict[int, Box], presence: np.ndarray,
                       category_id: int, p_max: int) -> PartGraph:
    X = np.zeros((p_max, 5), dtype=np.float64)
    for k, b in boxes.items():
        X[k, 0] = 1.0
        X[k, 1:5] = b.as_array()
    adj = (out.adjacency_probs[0].numpy() >= 0.5).astype(np.uint8)
    adj = adj * presence.astype(np.uint8)[None, :] * presence.astype(np.uint8)[:, None]
    np.fill_diagonal(adj, 0)
    adj = np.maximum(adj, adj.T)
    return PartGraph(X=X, A=adj, category_id=category_id)


def generate_layout(req: GenerationRequest, box_model: BoxVAE, mask_model: LabelMapVAE,
                    schema_set: SchemaSet) -> GenerateResult:
    """Sample a box graph and its label map for the requested parts.

    The requested part list is authoritative: a requested part whose decoded
    presence probability falls below 0.5 is forced present with its decoded
    box (logged). Deterministic in req.seed.
    """
    schema = schema_set.by_id(req.category_id)
    presence, req_idx = _request_presence(req, schema)
    cat_idx = category_index(schema_set, req.category_id)
    p_max = schema.p_max

    z = sample_prior((1, box_model.latent_dim), seed=rng(_derived_seed(req.seed, 0)))
    with torch.no_grad():
        out = box_model.decode(z, torch.tensor([cat_idx]),
                               torch.from_numpy(presence).unsqueeze(0))
    forced = [k for k in req_idx if float(out.presence_probs[0, k]) < 0.5]
    if forced:
        log.info("forcing requested parts with sub-threshold presence: %s", forced)

    boxes: dict[int, Box] = {}
    for k in req_idx:
        boxes[k] = sanitize_box(out.boxes_hat[0, k].numpy())
    if req.fixed_boxes:
        boxes.update(req.fixed_boxes)

    graph = _graph_from_decode(out, boxes, presence, req.category_id, p_max)
    z_m = sample_prior((1, mask_model.latent_dim), seed=rng(_derived_seed(req.seed, 1)))
    masks = _decode_masks(mask_model, z_m, boxes, presence, cat_idx)
    order = paste_order(boxes, schema_set.paste_orders.get(req.category_id))
    layout = compose_layout(masks, boxes, order=order, canvas=req.canvas,
                            category_id=req.category_id)
    return GenerateResult(graph=graph, layout=layout, boxes=boxes, masks=masks,
                          forced_parts=forced)


def apply_edits(boxes: dict[int, Box], edits: list[EditCommand],
                schema: PartSchema) -> dict[int, Box]:
    """Validate and apply edit commands to a box set."""
    new_boxes = dict(boxes)
    for cmd in edits:
        if cmd.kind == "set_box":
            if cmd.part_index not in new_boxes:
                raise RejectedEditError(f"part {cmd.part_index} is not present")
            if cmd.box is None or not cmd.box.is_valid():
                raise RejectedEditError(
                    f"part {cmd.part_index}: box must stay inside the frame with positive size")
            new_boxes[cmd.part_index] = cmd.box
        elif cmd.kind == "remove_part":
            if cmd.part_index not in new_boxes:
                raise RejectedEditError(f"part {cmd.part_index} is not present")
            del new_boxes[cmd.part_index]
        elif cmd.kind == "add_part":
            if cmd.part_name is None:
                raise RejectedEditError("add_part requires a part name")
            k = schema.part_index(cmd.part_name)
            if k in new_boxes:
                raise RejectedEditError(f"part {cmd.part_name!r} is already present")
            if cmd.box is None or not cmd.box.is_valid():
                raise RejectedEditError(
                    "add_part in an edit needs an explicit valid box; "
                    "use the part-hallucination flow to decode one")
            new_boxes[k] = cmd.box
        else:
            raise RejectedEditError(f"unknown edit kind {cmd.kind!r}")
    return new_boxes


def edit_and_regenerate(prev_boxes: dict[int, Box], edits: list[EditCommand],
                        req: GenerationRequest, mask_model: LabelMapVAE,
                        schema_set: SchemaSet) -> GenerateResult:
    """Replace boxes per the edits and regenerate every mask conditioned on
    the edited boxes. With no edits and the same seed this reproduces the
    original layout exactly."""
    schema = schema_set.by_id(req.category_id)
    boxes = apply_edits(prev_boxes, edits, schema)
    presence = np.zeros(schema.p_max, dtype=np.float32)
    for k in boxes:
        presence[k] = 1.0
    cat_idx = category_index(schema_set, req.category_id)

    z_m = sample_prior((1, mask_model.latent_dim), seed=rng(_derived_seed(req.seed, 1)))
    masks = _decode_masks(mask_model, z_m, boxes, presence, cat_idx)
    order = paste_order(boxes, schema_set.paste_orders.get(req.category_id))
    layout = compose_layout(masks, boxes, order=order, canvas=req.canvas,
                            category_id=req.category_id)
    return GenerateResult(
        graph=_graph_like(boxes, presence, req.category_id, schema.p_max),
        layout=layout, boxes=boxes, masks=masks,
    )


def _graph_like(boxes: dict[int, Box], presence: np.ndarray, category_id: int,
                p_max: int) -> PartGraph:
    X = np.zeros((p_max, 5), dtype=np.float64)
    for k, b in boxes.items():
        X[k, 0] = 1.0
        X[k, 1:5] = b.as_array()
    A = adjacency_rules(p_max)["dilated_overlap"](boxes)
    return PartGraph(X=X, A=A, category_id=category_id)


def instance_mask_set(inst: NormalizedInstance, p_max: int) -> PartMaskSet:
    masks = np.zeros((p_max, MASK_SIZE, MASK_SIZE), dtype=np.float32)
    for k in inst.present_indices:
        masks[k] = resize_mask(inst.part_masks[k])
    return PartMaskSet(masks=masks, presence=inst.presence.astype(np.float32))


def hallucinate_part(boxes: dict[int, Box], mask_set: PartMaskSet, category_id: int,
                     new_part: str, box_model: BoxVAE, mask_model: LabelMapVAE,
                     schema_set: SchemaSet, seed: int = 0,
                     canvas: tuple[int, int] = (CANVAS_SIZE, CANVAS_SIZE)) -> GenerateResult:
    """Hallucinate one extra part onto an existing box/mask state.

    The state is encoded, a posterior sample is decoded under the augmented
    part list, and only the new part's box (then mask) is taken; everything
    else is kept as-is.
    """
    schema = schema_set.by_id(category_id)
    new_idx = schema.part_index(new_part)
    cat_idx = category_index(schema_set, category_id)

    presence = mask_set.presence.astype(np.float32)
    graph = _graph_like(boxes, presence, category_id, schema.p_max)
    X = torch.from_numpy(graph.X.copy()).float().unsqueeze(0)
    A = torch.from_numpy(graph.A.copy()).float().unsqueeze(0)
    cat_t = torch.tensor([cat_idx])

    augmented = presence.copy()
    augmented[new_idx] = 1.0
    aug_t = torch.from_numpy(augmented).unsqueeze(0)

    with torch.no_grad():
        g = box_model.encode(X, A, cat_t)
        z_d = reparameterize(g, seed=rng(_derived_seed(seed, 0)))
        out = box_model.decode(z_d, cat_t, aug_t)
    new_boxes = dict(boxes)
    new_boxes[new_idx] = sanitize_box(out.boxes_hat[0, new_idx].numpy())

    masks_t = torch.from_numpy(mask_set.masks).unsqueeze(0)
    boxes_orig_t = _boxes_tensor(boxes, schema.p_max, torch.float32).unsqueeze(0)
    pres_orig_t = torch.from_numpy(presence).unsqueeze(0)
    with torch.no_grad():
        g_m = mask_model.encode(masks_t, boxes_orig_t, pres_orig_t, cat_t)
        z_m = reparameterize(g_m, seed=rng(_derived_seed(seed, 1)))
    decoded = _decode_masks(mask_model, z_m, new_boxes, augmented, cat_idx)

    final = mask_set.masks.copy()
    final[new_idx] = decoded.masks[new_idx]
    out_masks = PartMaskSet(masks=final, presence=augmented.copy())
    order = paste_order(new_boxes, schema_set.paste_orders.get(category_id))
    layout = compose_layout(out_masks, new_boxes, order=order, canvas=canvas,
                            category_id=category_id)
    return GenerateResult(
        graph=_graph_like(new_boxes, augmented, category_id, schema.p_max),
        layout=layout, boxes=new_boxes, masks=out_masks,
    )


def add_part(test_inst: NormalizedInstance, new_part: str, box_model: BoxVAE,
             mask_model: LabelMapVAE, schema_set: SchemaSet, seed: int = 0,
             canvas: tuple[int, int] = (CANVAS_SIZE, CANVAS_SIZE)) -> GenerateResult:
    """Hallucinate a schema part absent from a corpus instance onto it."""
    schema = schema_set.by_id(test_inst.category_id)
    new_idx = schema.part_index(new_part)
    if test_inst.presence[new_idx]:
        log.info("part %r already present; returning the instance unchanged", new_part)
        return recompose_instance(test_inst, schema_set, canvas)
    return hallucinate_part(
        dict(test_inst.part_boxes), instance_mask_set(test_inst, schema.p_max),
        test_inst.category_id, new_part, box_model, mask_model, schema_set,
        seed=seed, canvas=canvas,
    )


def recompose_instance(inst: NormalizedInstance, schema_set: SchemaSet,
                       canvas: tuple[int, int] = (CANVAS_SIZE, CANVAS_SIZE)) -> GenerateResult:
    """Compose an instance's ground-truth masks into a layout (no model)."""
    schema = schema_set.by_id(inst.category_id)
    mask_set = instance_mask_set(inst, schema.p_max)
    presence = inst.presence.astype(np.float32)
    order = paste_order(inst.part_boxes, schema_set.paste_orders.get(inst.category_id))
    layout = compose_layout(mask_set, dict(inst.part_boxes), order=order, canvas=canvas,
                            category_id=inst.category_id)
    return GenerateResult(
        graph=_graph_like(dict(inst.part_boxes), presence, inst.category_id, schema.p_max),
        layout=layout, boxes=dict(inst.part_boxes), masks=mask_set,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def layout_contains_parts(result: GenerateResult) -> bool:
    """Every labeled pixel of part k must lie inside part k's pixel box."""
    from .layout import box_to_pixels

    lm = result.layout.label_map
    h, w = lm.shape
    for k, b in result.boxes.items():
        px = box_to_pixels(b, h, w)
        inside = np.zeros_like(lm, dtype=bool)
        if px is not None:
            r0, c0, r1, c1 = px
            inside[r0:r1, c0:c1] = True
        if np.any((lm == k + 1) & ~inside):
            return False
    return True


def eval_metrics(corpus, box_model: BoxVAE, mask_model: LabelMapVAE,
                 schema_set: SchemaSet, n_generations: int = 100,
                 seed: int = 0) -> dict:
    """Reconstruction and generation metrics on the test split.

    - presence_accuracy: decoded (z = mu) presence vs ground truth, all slots.
    - mean_box_iou: decoded boxes vs ground truth over present parts.
    - generated_part_rate: fraction of requested parts with >= 1 labeled
      pixel across prior generations conditioned on test part lists.
    - containment_rate: generated layouts respecting the box invariant.
    """
    from .boxvae import box_iou
    from .training import corpus_tensors

    test = corpus_tensors(corpus, "test")
    with torch.no_grad():
        g = box_model.encode(test.X, test.A, test.category)
        out = box_model.decode(g.mu, test.category, test.presence)
    pred_presence = (out.presence_probs >= 0.5).float()
    presence_acc = float((pred_presence == test.presence).float().mean())

    ious = box_iou(out.boxes_hat, test.X[..., 1:5])
    mask = test.presence.bool()
    mean_iou = float(ious[mask].mean())

    instances = corpus.subset("test")
    requested = visible = 0
    contained = 0
    for i in range(n_generations):
        inst = instances[i % len(instances)]
        schema = schema_set.by_id(inst.category_id)
        names = tuple(schema.part_names[k] for k in inst.present_indices)
        req = GenerationRequest(category_id=inst.category_id, part_names=names,
                                seed=seed + i)
        result = generate_layout(req, box_model, mask_model, schema_set)
        labels = set(np.unique(result.layout.label_map)) - {0}
        requested += len(names)
        visible += sum(1 for k in inst.present_indices if k + 1 in labels)
        contained += layout_contains_parts(result)
    return {
        "presence_accuracy": presence_acc,
        "mean_box_iou": mean_iou,
        "generated_part_rate": visible / max(1, requested),
        "containment_rate": contained / max(1, n_generations),
        "n_generations": n_generations,
    }
