"""Deterministic geometric augmentation of normalized instances."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .normalize import fit_to_bounds
from .types import Box, NormalizedInstance

log = logging.getLogger(__name__)

MIN_BOX_SIZE = 1e-3  # per axis, keeps IoU/center losses finite


@dataclass(frozen=True)
class AugmentPolicy:
    """Ranges for the augmentation draws.

    translate: max |dx|, |dy| offset of the whole object.
    object_scale / part_scale: anisotropic scale factor range, drawn per axis;
      object scale is about the origin, part scale about each box center.
    mirror_prob: probability of horizontal mirroring.
    """

    translate: tuple[float, float] = (0.0, 0.0)
    object_scale: tuple[float, float] = (1.0, 1.0)
    part_scale: tuple[float, float] = (1.0, 1.0)
    mirror_prob: float = 0.0


def _scale_about(b: Box, cx: float, cy: float, sx: float, sy: float) -> Box:
    return Box(
        cx + (b.x_min - cx) * sx,
        cy + (b.y_min - cy) * sy,
        cx + (b.x_max - cx) * sx,
        cy + (b.y_max - cy) * sy,
    )


def _clamp_min_size(b: Box) -> tuple[Box, bool]:
    clamped = False
    x0, y0, x1, y1 = b.x_min, b.y_min, b.x_max, b.y_max
    if x1 - x0 < MIN_BOX_SIZE:
        cx = (x0 + x1) / 2.0
        x0, x1 = cx - MIN_BOX_SIZE / 2, cx + MIN_BOX_SIZE / 2
        clamped = True
    if y1 - y0 < MIN_BOX_SIZE:
        cy = (y0 + y1) / 2.0
        y0, y1 = cy - MIN_BOX_SIZE / 2, cy + MIN_BOX_SIZE / 2
        clamped = True
    return Box(x0, y0, x1, y1), clamped


def mirror_box(b: Box) -> Box:
    # negate x and swap so x_min < x_max still holds
    return Box(-b.x_max, b.y_min, -b.x_min, b.y_max)


def augment(inst: NormalizedInstance, seed: int, policy: AugmentPolicy) -> NormalizedInstance:
    """Apply object scale, per-part scale, translation and mirroring.

    Deterministic for a fixed seed. Transforms that draw their identity value
    are skipped outright, so an all-identity policy returns the input
    bit-exactly. Out-of-bounds results are rescaled about the origin to fit
    [-1, 1]^2; boxes collapsing below MIN_BOX_SIZE are clamped (logged).
    """
    rng = np.random.default_rng(seed)
    boxes = dict(inst.part_boxes)
    masks = dict(inst.part_masks)
    order = sorted(boxes.keys())

    # object-level anisotropic scale (about origin)
    sx = rng.uniform(*policy.object_scale)
    sy = rng.uniform(*policy.object_scale)
    if sx != 1.0 or sy != 1.0:
        boxes = {k: _scale_about(b, 0.0, 0.0, sx, sy) for k, b in boxes.items()}

    # per-part anisotropic scale (about each box center)
    for k in order:
        px = rng.uniform(*policy.part_scale)
        py = rng.uniform(*policy.part_scale)
        if px != 1.0 or py != 1.0:
            cx, cy = boxes[k].center
            boxes[k] = _scale_about(boxes[k], cx, cy, px, py)

    # translation
    dx = rng.uniform(-policy.translate[0], policy.translate[0]) if policy.translate[0] else 0.0
    dy = rng.uniform(-policy.translate[1], policy.translate[1]) if policy.translate[1] else 0.0
    if dx != 0.0 or dy != 0.0:
        boxes = {k: Box(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy) for k, b in boxes.items()}

    # horizontal mirror: boxes reflect, mask rasters flip
    if policy.mirror_prob > 0.0 and rng.random() < policy.mirror_prob:
        boxes = {k: mirror_box(b) for k, b in boxes.items()}
        masks = {k: np.flip(m, axis=1).copy() for k, m in masks.items()}

    clamp_events = 0
    for k in order:
        boxes[k], clamped = _clamp_min_size(boxes[k])
        clamp_events += clamped
    if clamp_events:
        log.warning("augment: clamped %d degenerate boxes to minimum size", clamp_events)

    out = NormalizedInstance(
        category_id=inst.category_id,
        part_boxes=boxes,
        part_masks=masks,
        presence=inst.presence.copy(),
    )
    return fit_to_bounds(out)
