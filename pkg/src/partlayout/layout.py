"""Mask rasters and label-map composition.

Masks travel as fixed 64x64 rasters in canonical part order; composition
scales each present mask into its box's pixel extent on the render canvas and
pastes in an explicit z-order (later parts overwrite earlier ones).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .data.types import Box, DegenerateInstanceError

log = logging.getLogger(__name__)

MASK_SIZE = 64
CANVAS_SIZE = 256
MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class PartMaskSet:
    """(p_max, 64, 64) float rasters in [0, 1]; absent slots all-zero."""

    masks: np.ndarray
    presence: np.ndarray

    def __post_init__(self):
        if self.masks.ndim != 3 or self.masks.shape[1:] != (MASK_SIZE, MASK_SIZE):
            raise ValueError(f"masks must be (p, {MASK_SIZE}, {MASK_SIZE})")
        if self.masks.shape[0] != self.presence.shape[0]:
            raise ValueError("mask count must match presence length")


@dataclass(frozen=True)
class ObjectLayout:
    """Composed per-pixel part-label map. 0 is background, part k is k + 1."""

    label_map: np.ndarray  # (H, W) uint8
    category_id: int
    boxes: dict[int, Box] = field(default_factory=dict)
    order: tuple[int, ...] = ()

    @property
    def canvas_size(self) -> tuple[int, int]:
        return self.label_map.shape


def _bilinear(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))[None, None]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False, antialias=False)
    return out[0, 0].numpy()


def resize_mask(mask: np.ndarray, size: int = MASK_SIZE) -> np.ndarray:
    """Bilinear resample to (size, size), thresholded back to binary.

    An empty input raises; an empty result (possible for thin shapes) falls
    back to lighting the center pixel so downstream stages always see at
    least one foreground pixel.
    """
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    if not np.any(mask):
        raise DegenerateInstanceError("cannot resize an empty mask")
    if mask.shape == (size, size):
        return (mask != 0).astype(np.uint8) if mask.dtype != np.uint8 else mask.copy()
    resized = _bilinear((mask != 0).astype(np.float32), (size, size))
    out = (resized >= MASK_THRESHOLD).astype(np.uint8)
    if not out.any():
        out[size // 2, size // 2] = 1
    return out


def box_to_pixels(box: Box, height: int, width: int) -> tuple[int, int, int, int] | None:
    """(row0, col0, row1, col1) pixel extent of a normalized box, or None if
    it collapses to zero pixels after rounding."""
    c0 = int(round((box.x_min + 1.0) / 2.0 * width))
    c1 = int(round((box.x_max + 1.0) / 2.0 * width))
    r0 = int(round((box.y_min + 1.0) / 2.0 * height))
    r1 = int(round((box.y_max + 1.0) / 2.0 * height))
    c0, c1 = max(0, c0), min(width, c1)
    r0, r1 = max(0, r0), min(height, r1)
    if r1 <= r0 or c1 <= c0:
        return None
    return r0, c0, r1, c1


def paste_order(boxes: dict[int, Box], explicit: tuple[int, ...] | None = None) -> tuple[int, ...]:
    """Large-area parts first, ties broken by canonical index, unless an
    explicit per-category order is supplied."""
    if explicit is not None:
        return tuple(k for k in explicit if k in boxes)
    areas = {k: b.width * b.height for k, b in boxes.items()}
    return tuple(sorted(boxes, key=lambda k: (-areas[k], k)))


def compose_layout(masks: PartMaskSet, boxes: dict[int, Box],
                   order: tuple[int, ...] | None = None,
                   canvas: tuple[int, int] = (CANVAS_SIZE, CANVAS_SIZE),
                   category_id: int = 0) -> ObjectLayout:
    """Threshold each present mask, scale it to its box's pixel extent and
    paste onto the canvas; later entries in the order overwrite earlier ones.
    Boxes that pixelize to nothing are skipped with a warning."""
    height, width = canvas
    label_map = np.zeros((height, width), dtype=np.uint8)
    if order is None:
        order = paste_order(boxes)
    used: list[int] = []
    for k in order:
        if k not in boxes or not masks.presence[k]:
            continue
        px = box_to_pixels(boxes[k], height, width)
        if px is None:
            log.warning("part %d box degenerate after pixelization; skipped", k)
            continue
        r0, c0, r1, c1 = px
        binary = (masks.masks[k] >= MASK_THRESHOLD).astype(np.float32)
        if not binary.any():
            continue
        scaled = _bilinear(binary, (r1 - r0, c1 - c0)) >= MASK_THRESHOLD
        region = label_map[r0:r1, c0:c1]
        region[scaled] = k + 1
        used.append(k)
    return ObjectLayout(label_map=label_map, category_id=category_id,
                        boxes={k: boxes[k] for k in used}, order=tuple(order))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

# distinct part colors for the indexed PNG; index 0 (background) is black
_PALETTE = [
    (0, 0, 0), (230, 76, 60), (52, 152, 219), (46, 204, 113), (241, 196, 15),
    (155, 89, 182), (231, 126, 34), (26, 188, 156), (149, 165, 166),
    (236, 112, 160), (127, 140, 141), (99, 110, 250), (190, 120, 80),
]


def layout_color(label: int) -> tuple[int, int, int]:
    return _PALETTE[label % len(_PALETTE)]


def layout_hash(layout: ObjectLayout) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(layout.label_map).tobytes())
    return h.hexdigest()


def layout_to_png_bytes(layout: ObjectLayout) -> bytes:
    img = Image.fromarray(layout.label_map, mode="P")
    palette = []
    for i in range(256):
        palette.extend(layout_color(i) if i else (0, 0, 0))
    img.putpalette(palette)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def layout_label_b64(layout: ObjectLayout) -> str:
    return base64.b64encode(np.ascontiguousarray(layout.label_map).tobytes()).decode("ascii")


def export_layout(layout: ObjectLayout, path: str | Path,
                  part_names: list[str] | None = None,
                  extra: dict | None = None) -> None:
    """PNG label map plus a JSON sidecar describing boxes and paste order."""
    path = Path(path)
    path.write_bytes(layout_to_png_bytes(layout))
    sidecar = {
        "category": layout.category_id,
        "parts": part_names or [],
        "boxes": {str(k): [b.x_min, b.y_min, b.x_max, b.y_max] for k, b in layout.boxes.items()},
        "order": list(layout.order),
        "canvas": list(layout.canvas_size),
        "hash": layout_hash(layout),
    }
    if extra:
        sidecar.update(extra)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
