"""Box layouts as graphs: node features plus a derived adjacency."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .schema import PartSchema
from .types import Box, NormalizedInstance, PartGraph

EPS_ADJ = 0.02  # dilation, normalized units

AdjacencyRule = Callable[[dict[int, Box]], np.ndarray]


def _dilated_overlap(boxes: dict[int, Box], eps: float, p_max: int) -> np.ndarray:
    A = np.zeros((p_max, p_max), dtype=np.uint8)
    keys = sorted(boxes.keys())
    for i, m in enumerate(keys):
        bm = boxes[m]
        for n in keys[i + 1 :]:
            bn = boxes[n]
            x_overlap = min(bm.x_max, bn.x_max) - max(bm.x_min, bn.x_min) + 2 * eps
            y_overlap = min(bm.y_max, bn.y_max) - max(bm.y_min, bn.y_min) + 2 * eps
            if x_overlap >= 0 and y_overlap >= 0:
                A[m, n] = A[n, m] = 1
    return A


def make_dilated_overlap_rule(eps: float, p_max: int) -> AdjacencyRule:
    return lambda boxes: _dilated_overlap(boxes, eps, p_max)


def adjacency_rules(p_max: int) -> dict[str, AdjacencyRule]:
    """Registry of pluggable rules deriving A from boxes."""
    return {
        "dilated_overlap": make_dilated_overlap_rule(EPS_ADJ, p_max),
        "none": lambda boxes: np.zeros((p_max, p_max), dtype=np.uint8),
    }


def build_part_graph(
    inst: NormalizedInstance,
    schema: PartSchema,
    adjacency_rule: str = "dilated_overlap",
) -> PartGraph:
    """Assemble X = [presence | box corners] in canonical part order and derive
    A with the named rule. Rows of absent parts stay all-zero."""
    if inst.category_id != schema.category_id:
        raise ValueError(
            f"instance category {inst.category_id} does not match schema {schema.category_id}"
        )
    p_max = schema.p_max
    X = np.zeros((p_max, 5), dtype=np.float64)
    for k, b in inst.part_boxes.items():
        X[k, 0] = 1.0
        X[k, 1:5] = b.as_array()
    try:
        rule = adjacency_rules(p_max)[adjacency_rule]
    except KeyError:
        raise ValueError(f"unknown adjacency rule {adjacency_rule!r}") from None
    A = rule(inst.part_boxes)
    return PartGraph(X=X, A=A, category_id=inst.category_id)
