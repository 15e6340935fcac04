"""Core data containers shared across the dataset and model code.

All containers are immutable after construction (arrays are set non-writeable)
so instances can be shared freely across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .schema import SchemaSet


class DegenerateInstanceError(ValueError):
    """Raised when an instance has no usable foreground."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in normalized coordinates, x rightward, y downward.

    Corners are (x_min, y_min, x_max, y_max) in [-1, 1]; an all-zero box
    denotes an absent part.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "Box":
        return Box(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def is_valid(self) -> bool:
        return (
            self.x_min < self.x_max
            and self.y_min < self.y_max
            and all(-1.0 <= v <= 1.0 for v in (self.x_min, self.y_min, self.x_max, self.y_max))
        )


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ObjectInstance:
    """Raw per-object annotation: pixel masks for each annotated part."""

    category_id: int
    part_masks: dict[int, np.ndarray]  # part index -> binary raster (h, w), nonzero = fg
    image_size: tuple[int, int]  # (height, width)

    def __post_init__(self):
        for k, m in self.part_masks.items():
            if m.ndim != 2:
                raise ValueError(f"mask {k} must be 2-D")
            _freeze(m)


@dataclass(frozen=True)
class NormalizedInstance:
    """Object with per-part tight boxes in [-1, 1]^2 and box-cropped masks.

    ``part_masks[k]`` is the binary crop of part k's mask to its tight box at
    native resolution: the raster stretches with the box, so box-only
    transforms (translate/scale) leave it untouched.
    """

    category_id: int
    part_boxes: dict[int, Box]
    part_masks: dict[int, np.ndarray]
    presence: np.ndarray  # (p_max,) uint8

    def __post_init__(self):
        _freeze(self.presence)
        for m in self.part_masks.values():
            _freeze(m)
        for k in self.part_boxes:
            if not self.presence[k]:
                raise ValueError(f"box present for part {k} but presence bit unset")
        for k, flag in enumerate(self.presence):
            if flag and k not in self.part_boxes:
                raise ValueError(f"presence bit set for part {k} without a box")

    @property
    def present_indices(self) -> list[int]:
        return sorted(self.part_boxes.keys())


@dataclass(frozen=True)
class PartGraph:
    """Box layout as a node-feature matrix plus binary adjacency.

    X is (p_max, 5): column 0 the presence bit, columns 1..4 the box corners.
    Rows of absent parts are all zero. A is symmetric with a zero diagonal and
    only links present parts. Row indices follow the category's canonical
    part order.
    """

    X: np.ndarray  # (p_max, 5) float64
    A: np.ndarray  # (p_max, p_max) uint8
    category_id: int

    def __post_init__(self):
        p = self.X.shape[0]
        if self.X.shape != (p, 5) or self.A.shape != (p, p):
            raise ValueError("shape mismatch between X and A")
        if not np.array_equal(self.A, self.A.T):
            raise ValueError("A must be symmetric")
        if np.any(np.diag(self.A)):
            raise ValueError("A must have a zero diagonal")
        pres = self.X[:, 0]
        if not np.all(np.isin(pres, (0.0, 1.0))):
            raise ValueError("presence column must be binary")
        if np.any(self.X[pres == 0]):
            raise ValueError("rows of absent parts must be all-zero")
        links = np.argwhere(self.A)
        if links.size and not np.all(pres[links.ravel()] == 1):
            raise ValueError("adjacency links an absent part")
        _freeze(self.X)
        _freeze(self.A)

    @property
    def presence(self) -> np.ndarray:
        return self.X[:, 0].astype(np.uint8)

    @property
    def boxes(self) -> np.ndarray:
        return self.X[:, 1:5]


@dataclass
class Corpus:
    """Instances plus their schemas and (optional) split tags."""

    schemas: SchemaSet
    instances: list[NormalizedInstance]
    split_tags: list[Optional[str]] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.split_tags:
            self.split_tags = [None] * len(self.instances)
        if len(self.split_tags) != len(self.instances):
            raise ValueError("split_tags must align with instances")

    def __len__(self) -> int:
        return len(self.instances)

    def subset(self, tag: str) -> list[NormalizedInstance]:
        return [inst for inst, t in zip(self.instances, self.split_tags) if t == tag]
