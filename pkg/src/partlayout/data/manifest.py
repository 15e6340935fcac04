"""Corpus ingestion from a JSON manifest of per-part PNG mask annotations.

Manifest format: a JSON list of entries
    {"image_id": str, "category": str, "masks": {part_name: mask_file}}
with mask paths relative to the manifest's directory. Nonzero pixels are
foreground.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .normalize import normalize_instance
from .schema import SchemaError, SchemaSet
from .types import Corpus, DegenerateInstanceError, ObjectInstance

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


def load_corpus(root_path: str | Path, schema_set: SchemaSet,
                manifest_name: str = "manifest.json") -> Corpus:
    """Read every manifest entry, build ObjectInstances and normalize them.

    Entries of categories outside the schema set are skipped (counted in a
    warning); unreadable or empty rasters skip the instance and append to the
    corpus error list.
    """
    root = Path(root_path)
    manifest_path = root / manifest_name
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    entries = json.loads(manifest_path.read_text())

    instances = []
    errors: list[str] = []
    skipped_categories = 0
    for entry in entries:
        image_id = entry.get("image_id", "<unknown>")
        try:
            schema = schema_set.by_name(entry["category"])
        except SchemaError:
            skipped_categories += 1
            continue
        try:
            masks: dict[int, np.ndarray] = {}
            size = None
            for part_name, rel in entry["masks"].items():
                idx = schema.part_index(part_name)
                arr = np.asarray(Image.open(root / rel).convert("L"))
                if size is None:
                    size = arr.shape
                elif arr.shape != size:
                    raise ManifestError(f"mask size mismatch in {image_id}")
                if arr.any():  # empty masks are treated as absent parts
                    masks[idx] = (arr != 0).astype(np.uint8)
            if size is None:
                raise DegenerateInstanceError("entry lists no masks")
            obj = ObjectInstance(
                category_id=schema.category_id,
                part_masks=masks,
                image_size=(int(size[0]), int(size[1])),
            )
            instances.append(normalize_instance(obj, schema_set.p_max))
        except (OSError, KeyError, ValueError) as exc:
            errors.append(f"{image_id}: {exc}")
    if skipped_categories:
        log.warning("skipped %d instances of categories outside the schema", skipped_categories)
    return Corpus(schemas=schema_set, instances=instances, errors=errors)


def save_corpus_manifest(corpus: Corpus, out_dir: str | Path, canvas: int = 256,
                         manifest_name: str = "manifest.json") -> Path:
    """Write a corpus back out in the manifest format (plus schema.json).

    Part crops are pasted at their pixelized box positions on a blank canvas,
    one full-frame PNG per part, so ``load_corpus`` round-trips the data.
    """
    from ..layout import box_to_pixels
    from .schema import save_schema_set

    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    save_schema_set(corpus.schemas, out / "schema.json")
    entries = []
    for i, inst in enumerate(corpus.instances):
        schema = corpus.schemas.by_id(inst.category_id)
        image_id = f"{schema.category_name}_{i:05d}"
        files = {}
        for k in inst.present_indices:
            px = box_to_pixels(inst.part_boxes[k], canvas, canvas)
            if px is None:
                continue
            r0, c0, r1, c1 = px
            raster = np.zeros((canvas, canvas), dtype=np.uint8)
            crop = Image.fromarray((inst.part_masks[k] * 255).astype(np.uint8))
            crop = crop.resize((c1 - c0, r1 - r0), Image.NEAREST)
            raster[r0:r1, c0:c1] = np.asarray(crop)
            rel = f"masks/{image_id}_{schema.part_names[k]}.png"
            Image.fromarray(raster).save(out / rel)
            files[schema.part_names[k]] = rel
        entries.append({"image_id": image_id, "category": schema.category_name,
                        "masks": files})
    manifest_path = out / manifest_name
    manifest_path.write_text(json.dumps(entries, indent=2))
    return manifest_path
