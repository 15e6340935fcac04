"""Synthetic desk-scale corpus: parameterized part compositions with jitter.

Each category is a list of part templates. A template either has a free
``pos`` or attaches to an earlier part's edge, which guarantees the boxes
touch, so part connectivity holds by construction. Sizes and positions are
jittered per instance; optional per-part dropout removes non-anchor parts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .normalize import apply_frame, center_and_scale, presence_vector
from .schema import PartSchema, SchemaSet
from .types import Box, Corpus, NormalizedInstance

MASK_PX_PER_UNIT = 64  # native mask resolution of synthesized parts


@dataclass(frozen=True)
class PartTemplate:
    name: str
    shape: str  # "rect" | "ellipse"
    half_size: tuple[float, float]  # (hw, hh) in template units
    size_jitter: float = 0.0  # fractional, per axis
    pos: Optional[tuple[float, float]] = None  # free part center
    attach_to: Optional[str] = None  # anchor part name
    attach_edge: Optional[str] = None  # top|bottom|left|right of the anchor
    offset: float = 0.0  # center offset along the attach edge
    offset_jitter: float = 0.0
    dropout: float = 0.0


@dataclass(frozen=True)
class CategoryTemplate:
    category_id: int
    name: str
    parts: tuple[PartTemplate, ...]


@dataclass(frozen=True)
class SynthConfig:
    categories: tuple[CategoryTemplate, ...]
    instances_per_category: int = 50

    def schema_set(self) -> SchemaSet:
        p_max = max(len(c.parts) for c in self.categories)
        return SchemaSet(
            schemas=tuple(
                PartSchema(
                    category_id=c.category_id,
                    category_name=c.name,
                    part_names=tuple(p.name for p in c.parts),
                    p_max=p_max,
                )
                for c in self.categories
            )
        )


def _part_template_from_dict(d: dict) -> PartTemplate:
    attach = d.get("attach") or {}
    return PartTemplate(
        name=d["name"],
        shape=d.get("shape", "rect"),
        half_size=tuple(d["half_size"]),
        size_jitter=float(d.get("size_jitter", 0.0)),
        pos=tuple(d["pos"]) if "pos" in d else None,
        attach_to=attach.get("to"),
        attach_edge=attach.get("edge"),
        offset=float(attach.get("offset", 0.0)),
        offset_jitter=float(attach.get("offset_jitter", 0.0)),
        dropout=float(d.get("dropout", 0.0)),
    )


def load_synth_config(path: str | Path) -> SynthConfig:
    raw = json.loads(Path(path).read_text())
    return synth_config_from_dict(raw)


def synth_config_from_dict(raw: dict) -> SynthConfig:
    cats = tuple(
        CategoryTemplate(
            category_id=int(c["id"]),
            name=str(c["name"]),
            parts=tuple(_part_template_from_dict(p) for p in c["parts"]),
        )
        for c in raw["categories"]
    )
    if len(cats) < 2:
        raise ValueError("synthetic config needs at least 2 categories")
    return SynthConfig(categories=cats, instances_per_category=int(raw.get("instances_per_category", 50)))


def default_synth_config(instances_per_category: int = 50) -> SynthConfig:
    """Two categories, six and four parts: an upright biped and a top-view
    glider. Anchor parts are listed first so canonical order is also a
    sensible large-to-small paste order."""
    biped = CategoryTemplate(
        category_id=1,
        name="biped",
        parts=(
            PartTemplate("torso", "rect", (0.28, 0.38), 0.12, pos=(0.0, 0.05)),
            PartTemplate("head", "ellipse", (0.15, 0.15), 0.15,
                         attach_to="torso", attach_edge="top", offset_jitter=0.05),
            PartTemplate("leg_l", "rect", (0.09, 0.30), 0.15,
                         attach_to="torso", attach_edge="bottom", offset=-0.14, offset_jitter=0.03),
            PartTemplate("leg_r", "rect", (0.09, 0.30), 0.15,
                         attach_to="torso", attach_edge="bottom", offset=0.14, offset_jitter=0.03),
            PartTemplate("arm_l", "rect", (0.07, 0.26), 0.15,
                         attach_to="torso", attach_edge="left", offset=-0.10, offset_jitter=0.04,
                         dropout=0.25),
            PartTemplate("arm_r", "rect", (0.07, 0.26), 0.15,
                         attach_to="torso", attach_edge="right", offset=-0.10, offset_jitter=0.04,
                         dropout=0.25),
        ),
    )
    glider = CategoryTemplate(
        category_id=2,
        name="glider",
        parts=(
            PartTemplate("fuselage", "rect", (0.10, 0.55), 0.10, pos=(0.0, 0.0)),
            PartTemplate("wing_l", "rect", (0.34, 0.11), 0.15,
                         attach_to="fuselage", attach_edge="left", offset=-0.12, offset_jitter=0.05),
            PartTemplate("wing_r", "rect", (0.34, 0.11), 0.15,
                         attach_to="fuselage", attach_edge="right", offset=-0.12, offset_jitter=0.05),
            PartTemplate("tail", "ellipse", (0.17, 0.08), 0.15,
                         attach_to="fuselage", attach_edge="bottom", offset_jitter=0.04,
                         dropout=0.25),
        ),
    )
    return SynthConfig(categories=(biped, glider), instances_per_category=instances_per_category)


def _place(t: PartTemplate, anchors: dict[str, Box], rng: np.random.Generator) -> Box:
    hw = t.half_size[0] * rng.uniform(1 - t.size_jitter, 1 + t.size_jitter)
    hh = t.half_size[1] * rng.uniform(1 - t.size_jitter, 1 + t.size_jitter)
    if t.attach_to is None:
        cx, cy = t.pos
    else:
        a = anchors[t.attach_to]
        off = t.offset + rng.uniform(-t.offset_jitter, t.offset_jitter)
        acx, acy = a.center
        if t.attach_edge == "top":
            cx, cy = acx + off, a.y_min - hh
        elif t.attach_edge == "bottom":
            cx, cy = acx + off, a.y_max + hh
        elif t.attach_edge == "left":
            cx, cy = a.x_min - hw, acy + off
        elif t.attach_edge == "right":
            cx, cy = a.x_max + hw, acy + off
        else:
            raise ValueError(f"bad attach edge {t.attach_edge!r}")
    return Box(cx - hw, cy - hh, cx + hw, cy + hh)


def _part_mask(t: PartTemplate, box: Box) -> np.ndarray:
    h = max(3, round(box.height * MASK_PX_PER_UNIT))
    w = max(3, round(box.width * MASK_PX_PER_UNIT))
    if t.shape == "ellipse":
        yy, xx = np.mgrid[0:h, 0:w]
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        mask = ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
        mask = mask.astype(np.uint8)
        # tight-crop guarantee: extreme rows/cols must contain foreground
        mask[h // 2, 0] = mask[h // 2, w - 1] = 1
        mask[0, w // 2] = mask[h - 1, w // 2] = 1
        return mask
    return np.ones((h, w), dtype=np.uint8)


def synth_generate(config: SynthConfig, seed: int) -> Corpus:
    """Deterministic corpus of normalized instances with ground-truth boxes
    and masks. Parts whose anchor was dropped are dropped with it."""
    if len(config.categories) < 2:
        raise ValueError("synthetic config needs at least 2 categories")
    schema_set = config.schema_set()
    p_max = schema_set.p_max
    instances = []
    for cat in config.categories:
        for i in range(config.instances_per_category):
            rng = np.random.default_rng([seed, cat.category_id, i])
            boxes_by_name: dict[str, Box] = {}
            boxes: dict[int, Box] = {}
            masks: dict[int, np.ndarray] = {}
            for k, t in enumerate(cat.parts):
                dropped = t.dropout > 0.0 and rng.random() < t.dropout
                if t.attach_to is not None and t.attach_to not in boxes_by_name:
                    dropped = True  # anchor was dropped, cascade
                if dropped:
                    continue
                b = _place(t, boxes_by_name, rng)
                boxes_by_name[t.name] = b
                boxes[k] = b
                masks[k] = _part_mask(t, b)
            cx, cy, s = center_and_scale(boxes)
            boxes = apply_frame(boxes, cx, cy, s)
            instances.append(
                NormalizedInstance(
                    category_id=cat.category_id,
                    part_boxes=boxes,
                    part_masks=masks,
                    presence=presence_vector(boxes, p_max),
                )
            )
    return Corpus(schemas=schema_set, instances=instances)
