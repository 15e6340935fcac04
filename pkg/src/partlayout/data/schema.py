"""Category/part schemas: the canonical part ordering everything else relies on."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PartSchema:
    """One object category with its canonical, duplicate-free part list.

    ``p_max`` is the global maximum part count across all categories in the
    schema set; it is shared so that graph/feature matrices have a fixed row
    count regardless of category. The order of ``part_names`` is frozen at
    corpus-build time: trained checkpoints index parts by row.
    """

    category_id: int
    category_name: str
    part_names: tuple[str, ...]
    p_max: int

    def __post_init__(self):
        if len(set(self.part_names)) != len(self.part_names):
            raise SchemaError(f"duplicate part names in {self.category_name}")
        if self.category_id < 1:
            raise SchemaError("category_id must be >= 1")
        if len(self.part_names) > self.p_max:
            raise SchemaError(
                f"{self.category_name}: {len(self.part_names)} parts exceeds p_max={self.p_max}"
            )

    @property
    def n_parts(self) -> int:
        return len(self.part_names)

    def part_index(self, name: str) -> int:
        try:
            return self.part_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown part {name!r} for {self.category_name}") from None


@dataclass(frozen=True)
class SchemaSet:
    """All categories of a corpus, indexed by id, plus paste-order overrides."""

    schemas: tuple[PartSchema, ...]
    paste_orders: dict[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.category_id for s in self.schemas]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate category ids")
        if self.schemas:
            p_max = self.schemas[0].p_max
            if any(s.p_max != p_max for s in self.schemas):
                raise SchemaError("inconsistent p_max across categories")
            if p_max < max(s.n_parts for s in self.schemas):
                raise SchemaError("p_max below the largest category part count")

    @property
    def p_max(self) -> int:
        return self.schemas[0].p_max if self.schemas else 0

    @property
    def n_categories(self) -> int:
        return len(self.schemas)

    def by_id(self, category_id: int) -> PartSchema:
        for s in self.schemas:
            if s.category_id == category_id:
                return s
        raise SchemaError(f"unknown category id {category_id}")

    def by_name(self, name: str) -> PartSchema:
        for s in self.schemas:
            if s.category_name == name:
                return s
        raise SchemaError(f"unknown category {name!r}")

    def to_json_dict(self) -> dict:
        d = {
            "categories": [
                {"id": s.category_id, "name": s.category_name, "parts": list(s.part_names)}
                for s in self.schemas
            ],
            "p_max": self.p_max,
        }
        if self.paste_orders:
            d["paste_orders"] = {str(k): list(v) for k, v in self.paste_orders.items()}
        return d

    def hash(self) -> str:
        """Stable digest of the canonical schema JSON; stored in checkpoint sidecars."""
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_schema_set(path: str | Path) -> SchemaSet:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"schema file not found: {path}")
    raw = json.loads(path.read_text())
    return schema_set_from_dict(raw)


def schema_set_from_dict(raw: dict) -> SchemaSet:
    cats = raw.get("categories")
    if not isinstance(cats, list) or not cats:
        raise SchemaError("schema file must contain a non-empty 'categories' list")
    declared_p_max = raw.get("p_max")
    p_max = max(len(c["parts"]) for c in cats)
    if declared_p_max is not None:
        if declared_p_max < p_max:
            raise SchemaError(f"declared p_max={declared_p_max} below actual max {p_max}")
        p_max = declared_p_max
    schemas = tuple(
        PartSchema(
            category_id=int(c["id"]),
            category_name=str(c["name"]),
            part_names=tuple(str(p) for p in c["parts"]),
            p_max=p_max,
        )
        for c in cats
    )
    paste_orders = {
        int(k): tuple(v) for k, v in (raw.get("paste_orders") or {}).items()
    }
    return SchemaSet(schemas=schemas, paste_orders=paste_orders)


def save_schema_set(schema_set: SchemaSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema_set.to_json_dict(), indent=2))
