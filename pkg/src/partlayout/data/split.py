"""Deterministic stratified train/val/test splitting."""

from __future__ import annotations

import logging

import numpy as np

from .types import Corpus

log = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.75, 0.15, 0.10)


def split_corpus(corpus: Corpus, ratios: tuple[float, float, float] = DEFAULT_RATIOS,
                 seed: int = 0) -> Corpus:
    """Tag every instance train/val/test, stratified by category.

    Rounding rule: val and test counts are floored, the remainder goes to
    train. Categories with fewer than 3 instances go entirely to train.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    _, r_val, r_test = ratios
    rng = np.random.default_rng(seed)
    tags: list[str | None] = [None] * len(corpus.instances)

    by_cat: dict[int, list[int]] = {}
    for i, inst in enumerate(corpus.instances):
        by_cat.setdefault(inst.category_id, []).append(i)

    for cat in sorted(by_cat):
        idx = np.array(by_cat[cat])
        n = len(idx)
        if n < 3:
            log.warning("category %d has %d instances; all assigned to train", cat, n)
            for i in idx:
                tags[i] = "train"
            continue
        perm = idx[rng.permutation(n)]
        n_val = int(np.floor(n * r_val))
        n_test = int(np.floor(n * r_test))
        for i in perm[:n_val]:
            tags[i] = "val"
        for i in perm[n_val : n_val + n_test]:
            tags[i] = "test"
        for i in perm[n_val + n_test :]:
            tags[i] = "train"

    return Corpus(
        schemas=corpus.schemas,
        instances=corpus.instances,
        split_tags=tags,
        errors=list(corpus.errors),
    )
