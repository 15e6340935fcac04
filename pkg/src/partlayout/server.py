"""JSON-over-HTTP service backing the interactive layout editor.

Checkpoints load once and are read-only; per-session state (last boxes,
masks, seed) lives in an in-memory LRU capped at 1024 sessions.
"""

from __future__ import annotations

import base64
import threading
import uuid
from collections import OrderedDict
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .data.schema import SchemaSet
from .data.types import Box
from .layout import layout_hash, layout_label_b64, layout_to_png_bytes
from .pipeline import (
    EditCommand,
    GenerateResult,
    GenerationRequest,
    RejectedEditError,
    edit_and_regenerate,
    generate_layout,
    hallucinate_part,
)
from .training import load_checkpoint

MAX_SESSIONS = 1024


class GenerateBody(BaseModel):
    category: str
    parts: list[str]
    seed: int = 0


class EditBody(BaseModel):
    session_id: str
    edits: list[dict] = Field(default_factory=list)


class AddPartBody(BaseModel):
    session_id: str
    part_name: str
    seed: Optional[int] = None


class SessionStore:
    """LRU-capped session map. Each session carries its own lock so
    concurrent edits of one session serialize while different sessions
    proceed in parallel over the shared read-only models."""

    def __init__(self, cap: int = MAX_SESSIONS):
        self._cap = cap
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, dict] = OrderedDict()

    def put(self, session_id: str, state: dict) -> None:
        state.setdefault("lock", threading.Lock())
        with self._lock:
            self._sessions[session_id] = state
            self._sessions.move_to_end(session_id)
            while len(self._sessions) > self._cap:
                self._sessions.popitem(last=False)

    def get(self, session_id: str) -> dict:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            self._sessions.move_to_end(session_id)
            return self._sessions[session_id]


def _boxes_json(result: GenerateResult, schema) -> dict[str, list[float]]:
    return {
        schema.part_names[k]: [b.x_min, b.y_min, b.x_max, b.y_max]
        for k, b in result.boxes.items()
    }


def _layout_json(result: GenerateResult) -> dict:
    h, w = result.layout.canvas_size
    return {
        "width": w,
        "height": h,
        "png_base64": base64.b64encode(layout_to_png_bytes(result.layout)).decode("ascii"),
        "label_base64": layout_label_b64(result.layout),
        "hash": layout_hash(result.layout),
    }


def _parse_edit(raw: dict, schema) -> EditCommand:
    kind = raw.get("kind")
    box = Box(*raw["box"]) if raw.get("box") is not None else None
    part_index = raw.get("part_index", -1)
    if part_index < 0 and raw.get("part") is not None:
        part_index = schema.part_index(raw["part"])
    return EditCommand(kind=kind, part_index=part_index, box=box,
                       part_name=raw.get("part_name") or raw.get("part"))


def create_app(box_ckpt: str, mask_ckpt: str, schema_set: SchemaSet) -> FastAPI:
    box_model, _ = load_checkpoint(box_ckpt, schema_set)
    mask_model, _ = load_checkpoint(mask_ckpt, schema_set)
    sessions = SessionStore()
    app = FastAPI(title="partlayout")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/schema")
    def schema():
        return schema_set.to_json_dict()

    @app.post("/generate")
    def generate(body: GenerateBody):
        try:
            cat = schema_set.by_name(body.category)
            req = GenerationRequest(category_id=cat.category_id,
                                    part_names=tuple(body.parts), seed=body.seed)
            result = generate_layout(req, box_model, mask_model, schema_set)
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = uuid.uuid4().hex
        sessions.put(session_id, {"req": req, "result": result, "schema": cat})
        return {
            "session_id": session_id,
            "category": body.category,
            "boxes": _boxes_json(result, cat),
            "forced_parts": [cat.part_names[k] for k in result.forced_parts],
            "layout": _layout_json(result),
        }

    def _get_session(session_id: str) -> dict:
        try:
            return sessions.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/edit")
    def edit(body: EditBody):
        state = _get_session(body.session_id)
        cat = state["schema"]
        with state["lock"]:
            try:
                edits = [_parse_edit(e, cat) for e in body.edits]
                result = edit_and_regenerate(state["result"].boxes, edits, state["req"],
                                             mask_model, schema_set)
            except RejectedEditError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            except (ValueError, KeyError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=f"malformed edit: {exc}")
            state["result"] = result
        return {
            "session_id": body.session_id,
            "boxes": _boxes_json(result, cat),
            "layout": _layout_json(result),
        }

    @app.post("/addpart")
    def addpart(body: AddPartBody):
        state = _get_session(body.session_id)
        cat = state["schema"]
        with state["lock"]:
            prev: GenerateResult = state["result"]
            seed = body.seed if body.seed is not None else state["req"].seed + 1
            try:
                if body.part_name not in cat.part_names:
                    raise RejectedEditError(f"part {body.part_name!r} not in schema")
                if cat.part_index(body.part_name) in prev.boxes:
                    raise RejectedEditError(f"part {body.part_name!r} already present")
                result = hallucinate_part(prev.boxes, prev.masks, cat.category_id,
                                          body.part_name, box_model, mask_model,
                                          schema_set, seed=seed)
            except RejectedEditError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            state["result"] = result
        return {
            "session_id": body.session_id,
            "boxes": _boxes_json(result, cat),
            "layout": _layout_json(result),
        }

    @app.get("/layout/{session_id}.png")
    def layout_png(session_id: str):
        state = _get_session(session_id)
        return Response(content=layout_to_png_bytes(state["result"].layout),
                        media_type="image/png")

    return app


def serve(box_ckpt: str, mask_ckpt: str, schema_set: SchemaSet,
          host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(box_ckpt, mask_ckpt, schema_set), host=host, port=port)
