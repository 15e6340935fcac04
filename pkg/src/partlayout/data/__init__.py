from .augment import AugmentPolicy, augment
from .graph import EPS_ADJ, adjacency_rules, build_part_graph
from .manifest import ManifestError, load_corpus
from .normalize import normalize_instance, renormalize
from .schema import PartSchema, SchemaError, SchemaSet, load_schema_set, save_schema_set
from .split import DEFAULT_RATIOS, split_corpus
from .synth import SynthConfig, default_synth_config, load_synth_config, synth_generate
from .types import (
    Box,
    Corpus,
    DegenerateInstanceError,
    NormalizedInstance,
    ObjectInstance,
    PartGraph,
)

__all__ = [
    "AugmentPolicy",
    "augment",
    "EPS_ADJ",
    "adjacency_rules",
    "build_part_graph",
    "ManifestError",
    "load_corpus",
    "normalize_instance",
    "renormalize",
    "PartSchema",
    "SchemaError",
    "SchemaSet",
    "load_schema_set",
    "save_schema_set",
    "DEFAULT_RATIOS",
    "split_corpus",
    "SynthConfig",
    "default_synth_config",
    "load_synth_config",
    "synth_generate",
    "Box",
    "Corpus",
    "DegenerateInstanceError",
    "NormalizedInstance",
    "ObjectInstance",
    "PartGraph",
]
