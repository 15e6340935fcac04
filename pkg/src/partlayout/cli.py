"""Command-line entry points.

Subcommands: synth, train, generate, edit, addpart, eval, serve. A JSON or
YAML config file can supply any flag's default; explicit flags win. Exit
codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

log = logging.getLogger(__name__)

STAGES = ("boxvae", "labelmapvae", "bmvae", "bslstm", "cggan")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        return yaml.safe_load(text) or {}
    return json.loads(text)


def _merged(args: argparse.Namespace, config: dict) -> argparse.Namespace:
    for key, value in config.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="partlayout", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="synthetic corpus config (JSON)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=None, help="per-category count")

    p = sub.add_parser("train", help="train a stage")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--corpus", required=True, help="corpus directory (manifest format)")
    p.add_argument("--config", help="JSON/YAML defaults for the flags below")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--out", default=None, help="run directory (default runs/<stage>)")

    p = sub.add_parser("generate", help="sample a layout from trained checkpoints")
    p.add_argument("--category", required=True)
    p.add_argument("--parts", required=True, help="comma-separated part names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box-ckpt", required=True)
    p.add_argument("--mask-ckpt", required=True)
    p.add_argument("--schema", required=True, help="schema.json path")
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("edit", help="re-render a generated layout with edited boxes")
    p.add_argument("--layout", required=True, help="JSON sidecar of a generated layout")
    p.add_argument("--edits", required=True, help="JSON list of edit commands")
    p.add_argument("--mask-ckpt", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the sidecar seed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("addpart", help="hallucinate a new part onto a corpus instance")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", type=int, required=True, help="instance index")
    p.add_argument("--part", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box-ckpt", required=True)
    p.add_argument("--mask-ckpt", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="reconstruction/generation metrics on the test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--box-ckpt", required=True)
    p.add_argument("--mask-ckpt", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="run the editing service")
    p.add_argument("--box-ckpt", required=True)
    p.add_argument("--mask-ckpt", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _load_split_corpus(corpus_dir: str, split_seed: int | None):
    from .data import load_corpus, load_schema_set, split_corpus

    schema_set = load_schema_set(Path(corpus_dir) / "schema.json")
    corpus = load_corpus(corpus_dir, schema_set)
    return split_corpus(corpus, seed=split_seed or 0)


def _cmd_synth(args) -> int:
    from .data import default_synth_config, load_synth_config, synth_generate
    from .data.manifest import save_corpus_manifest
    from .data.synth import SynthConfig
    import dataclasses

    cfg: SynthConfig = load_synth_config(args.config) if args.config else default_synth_config()
    if args.instances:
        cfg = dataclasses.replace(cfg, instances_per_category=args.instances)
    corpus = synth_generate(cfg, args.seed)
    manifest = save_corpus_manifest(corpus, args.out)
    print(f"wrote {len(corpus)} instances to {manifest.parent}")
    return 0


def _cmd_train(args) -> int:
    from .training import preset_config, train_stage

    args = _merged(args, _load_config(args.config))
    corpus = _load_split_corpus(args.corpus, args.split_seed)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.batch is not None:
        overrides["batch_size"] = args.batch
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides["out_dir"] = Path(args.out or f"runs/{args.stage}")
    result = train_stage(corpus, args.stage, preset_config(args.stage, **overrides))
    print(f"stage {result.stage}: best={result.best_path} last={result.last_path}")
    return 0


def _load_models(args):
    from .data import load_schema_set
    from .training import load_checkpoint

    schema_set = load_schema_set(args.schema)
    box_model, _ = load_checkpoint(args.box_ckpt, schema_set)
    mask_model, _ = load_checkpoint(args.mask_ckpt, schema_set)
    return schema_set, box_model, mask_model


def _cmd_generate(args) -> int:
    from .layout import export_layout
    from .pipeline import GenerationRequest, generate_layout

    schema_set, box_model, mask_model = _load_models(args)
    schema = schema_set.by_name(args.category)
    parts = tuple(p.strip() for p in args.parts.split(",") if p.strip())
    req = GenerationRequest(category_id=schema.category_id, part_names=parts, seed=args.seed)
    result = generate_layout(req, box_model, mask_model, schema_set)
    export_layout(result.layout, args.out, part_names=list(parts),
                  extra={"category_name": args.category, "seed": args.seed})
    print(f"wrote {args.out} ({len(result.boxes)} parts)")
    return 0


def _cmd_edit(args) -> int:
    from .data import load_schema_set
    from .data.types import Box
    from .layout import export_layout
    from .pipeline import EditCommand, GenerationRequest, edit_and_regenerate
    from .training import load_checkpoint

    schema_set = load_schema_set(args.schema)
    mask_model, _ = load_checkpoint(args.mask_ckpt, schema_set)
    sidecar = json.loads(Path(args.layout).read_text())
    category_id = sidecar["category"]
    schema = schema_set.by_id(category_id)
    boxes = {int(k): Box(*v) for k, v in sidecar["boxes"].items()}
    edits = []
    for raw in json.loads(Path(args.edits).read_text()):
        part_index = raw.get("part_index", -1)
        if part_index < 0 and raw.get("part"):
            part_index = schema.part_index(raw["part"])
        edits.append(EditCommand(
            kind=raw["kind"], part_index=part_index,
            box=Box(*raw["box"]) if raw.get("box") else None,
            part_name=raw.get("part_name") or raw.get("part"),
        ))
    seed = args.seed if args.seed is not None else sidecar.get("seed", 0)
    req = GenerationRequest(category_id=category_id,
                            part_names=tuple(sidecar.get("parts", [])),
                            seed=seed)
    result = edit_and_regenerate(boxes, edits, req, mask_model, schema_set)
    export_layout(result.layout, args.out, part_names=sidecar.get("parts"),
                  extra={"seed": req.seed})
    print(f"wrote {args.out}")
    return 0


def _cmd_addpart(args) -> int:
    from .layout import export_layout
    from .pipeline import add_part
    from .training import load_checkpoint

    corpus = _load_split_corpus(args.corpus, None)
    schema_set = corpus.schemas
    box_model, _ = load_checkpoint(args.box_ckpt, schema_set)
    mask_model, _ = load_checkpoint(args.mask_ckpt, schema_set)
    inst = corpus.instances[args.index]
    result = add_part(inst, args.part, box_model, mask_model, schema_set, seed=args.seed)
    schema = schema_set.by_id(inst.category_id)
    export_layout(result.layout, args.out, part_names=list(schema.part_names),
                  extra={"added_part": args.part, "seed": args.seed})
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .pipeline import eval_metrics
    from .training import load_checkpoint

    corpus = _load_split_corpus(args.corpus, args.split_seed)
    box_model, _ = load_checkpoint(args.box_ckpt, corpus.schemas)
    mask_model, _ = load_checkpoint(args.mask_ckpt, corpus.schemas)
    metrics = eval_metrics(corpus, box_model, mask_model, corpus.schemas,
                           n_generations=args.generations, seed=args.seed)
    print(json.dumps(metrics, indent=2))
    return 0


def _cmd_serve(args) -> int:
    from .data import load_schema_set
    from .server import serve

    serve(args.box_ckpt, args.mask_ckpt, load_schema_set(args.schema),
          host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "edit": _cmd_edit,
    "addpart": _cmd_addpart,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        log.exception("runtime failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
