"""Instance normalization: tight part boxes centered in the [-1, 1]^2 frame."""

from __future__ import annotations

import numpy as np

from .types import Box, DegenerateInstanceError, NormalizedInstance, ObjectInstance


def tight_pixel_box(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """(row_min, col_min, row_max_excl, col_max_excl) of the foreground, or None."""
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    if not rows.any():
        return None
    r0, r1 = np.argmax(rows), len(rows) - np.argmax(rows[::-1])
    c0, c1 = np.argmax(cols), len(cols) - np.argmax(cols[::-1])
    return int(r0), int(c0), int(r1), int(c1)


def center_and_scale(boxes: dict[int, Box]) -> tuple[float, float, float]:
    """Translation (cx, cy) and scale mapping the union box onto [-1, 1]^2.

    The returned transform is x -> (x - cx) * s with s chosen so the larger
    union axis spans exactly [-1, 1].
    """
    xs0 = min(b.x_min for b in boxes.values())
    xs1 = max(b.x_max for b in boxes.values())
    ys0 = min(b.y_min for b in boxes.values())
    ys1 = max(b.y_max for b in boxes.values())
    cx = (xs0 + xs1) / 2.0
    cy = (ys0 + ys1) / 2.0
    extent = max(xs1 - xs0, ys1 - ys0)
    if extent <= 0:
        raise DegenerateInstanceError("zero-extent instance")
    return cx, cy, 2.0 / extent


def apply_frame(boxes: dict[int, Box], cx: float, cy: float, s: float) -> dict[int, Box]:
    return {
        k: Box((b.x_min - cx) * s, (b.y_min - cy) * s, (b.x_max - cx) * s, (b.y_max - cy) * s)
        for k, b in boxes.items()
    }


def presence_vector(boxes: dict[int, Box], p_max: int) -> np.ndarray:
    pres = np.zeros(p_max, dtype=np.uint8)
    for k in boxes:
        pres[k] = 1
    return pres


def normalize_instance(obj: ObjectInstance, p_max: int) -> NormalizedInstance:
    """Center the union of part boxes at the origin with the larger axis
    spanning exactly [-1, 1]; crop each mask to its tight box.

    Pixel k covers the continuous interval [k, k+1), so a mask filling the
    whole image maps to the full-extent box.
    """
    pixel_boxes: dict[int, tuple[int, int, int, int]] = {}
    for k, mask in obj.part_masks.items():
        tb = tight_pixel_box(mask)
        if tb is not None:
            pixel_boxes[k] = tb
    if not pixel_boxes:
        raise DegenerateInstanceError("all part masks empty")

    raw = {
        k: Box(float(c0), float(r0), float(c1), float(r1))
        for k, (r0, c0, r1, c1) in pixel_boxes.items()
    }
    cx, cy, s = center_and_scale(raw)
    boxes = apply_frame(raw, cx, cy, s)

    crops = {}
    for k, (r0, c0, r1, c1) in pixel_boxes.items():
        crops[k] = (obj.part_masks[k][r0:r1, c0:c1] != 0).astype(np.uint8)

    return NormalizedInstance(
        category_id=obj.category_id,
        part_boxes=boxes,
        part_masks=crops,
        presence=presence_vector(boxes, p_max),
    )


def renormalize(inst: NormalizedInstance) -> NormalizedInstance:
    """Re-apply the centering/scaling. Identity (bit-exact) on already
    normalized instances: the union is then centered with unit half-extent, so
    cx = cy = 0 and s = 1 exactly."""
    cx, cy, s = center_and_scale(inst.part_boxes)
    if cx == 0.0 and cy == 0.0 and s == 1.0:
        return inst
    return NormalizedInstance(
        category_id=inst.category_id,
        part_boxes=apply_frame(inst.part_boxes, cx, cy, s),
        part_masks=inst.part_masks,
        presence=inst.presence.copy(),
    )


def fit_to_bounds(inst: NormalizedInstance) -> NormalizedInstance:
    """Uniformly rescale about the origin only if any coordinate leaves
    [-1, 1]; in-bounds instances pass through untouched (bit-exact)."""
    m = 0.0
    for b in inst.part_boxes.values():
        m = max(m, abs(b.x_min), abs(b.x_max), abs(b.y_min), abs(b.y_max))
    if m <= 1.0:
        return inst
    s = 1.0 / m
    return NormalizedInstance(
        category_id=inst.category_id,
        part_boxes=apply_frame(inst.part_boxes, 0.0, 0.0, s),
        part_masks=inst.part_masks,
        presence=inst.presence.copy(),
    )
