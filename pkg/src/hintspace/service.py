"""HTTP facade for the interactive annotation review loop.

Sessions own a working copy of the type map: accepting a suggestion
binds the symbol's embedding to the chosen type in that session only,
and the response names every still-pending symbol whose top suggestion
changed as a result. Rejections only trim a symbol's candidate list.
The decision log is append-only and replayable.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel

from .checker import checker_hook
from .extract import ExtractError, SymbolSpan, extract_file
from .harness import ModelBundle
from .typemap import EmptyMapError, PredictionConfig, TypeMap, save_map
from .typeexpr import ANY, TypeParseError, normalize_type, parse_type

__all__ = ["create_app"]

DEFAULT_CANDIDATES = 5


@dataclass
class FileEntry:
    file_id: str
    source: str
    symbols: list  # SymbolInfo sequence from the graph
    spans: dict[int, SymbolSpan]
    embeddings: np.ndarray  # one row per symbol


@dataclass
class Session:
    id: str
    working_map: TypeMap
    decisions: dict[str, dict] = field(default_factory=dict)
    rejected: dict[str, set[str]] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class AcceptBody(BaseModel):
    symbol_id: str
    type: str
    session_id: Optional[str] = None


class RejectBody(BaseModel):
    symbol_id: str
    type: str
    session_id: Optional[str] = None


def _load_sources(source_dir: Optional[str],
                  sources: Optional[dict[str, str]]) -> dict[str, str]:
    out: dict[str, str] = dict(sources or {})
    if source_dir:
        root = Path(source_dir)
        for path in sorted(root.rglob("*.py")):
            out[path.relative_to(root).as_posix()] = path.read_text(encoding="utf-8")
    return out


def create_app(bundle: ModelBundle, base_map: TypeMap,
               source_dir: Optional[str] = None,
               sources: Optional[dict[str, str]] = None,
               checker_command: Optional[str] = None,
               ui_dir: Optional[str] = None,
               k: int = 10, p: float = 2.0) -> FastAPI:
    app = FastAPI(title="hintspace review service")
    pred_config = PredictionConfig(k=k, p=p)

    files: dict[str, FileEntry] = {}
    for file_id, text in _load_sources(source_dir, sources).items():
        try:
            result = extract_file(text, file_id=file_id)
        except ExtractError:
            continue
        embeddings = bundle.embed_graph(result.graph)
        files[file_id] = FileEntry(file_id, text, list(result.graph.symbols),
                                   result.symbol_spans, embeddings)

    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    def new_session() -> Session:
        session = Session(str(uuid.uuid4()), base_map.clone())
        with sessions_lock:
            sessions[session.id] = session
        return session

    default_session = new_session()

    def get_session(session_id: Optional[str]) -> Session:
        if session_id is None:
            return default_session
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def locate(symbol_id: str) -> tuple[FileEntry, int]:
        file_id, _, index_text = symbol_id.rpartition("::")
        entry = files.get(file_id)
        if entry is None:
            raise HTTPException(404, f"unknown file in symbol id {symbol_id!r}")
        try:
            node_index = int(index_text)
        except ValueError:
            raise HTTPException(404, f"malformed symbol id {symbol_id!r}") from None
        for row, sym in enumerate(entry.symbols):
            if sym.node_index == node_index:
                return entry, row
        raise HTTPException(404, f"unknown symbol {symbol_id!r}")

    def symbol_id_of(entry: FileEntry, row: int) -> str:
        return f"{entry.file_id}::{entry.symbols[row].node_index}"

    def pending_rows(entry: FileEntry, session: Session) -> list[int]:
        out = []
        for row, sym in enumerate(entry.symbols):
            if sym.annotation is not None:
                continue
            if session.decisions.get(symbol_id_of(entry, row)):
                continue
            out.append(row)
        return out

    def candidates_for(session: Session, entry: FileEntry, row: int) -> list[dict]:
        sid = symbol_id_of(entry, row)
        vetoed = session.rejected.get(sid, set())
        try:
            ranked = session.working_map.predict(entry.embeddings[row], pred_config)
        except EmptyMapError:
            return []
        return [
            {"type": t.render(), "probability": prob}
            for t, prob in ranked[:DEFAULT_CANDIDATES]
            if t.render() not in vetoed
        ]

    def top1(session: Session, entry: FileEntry, row: int) -> Optional[str]:
        ranked = candidates_for(session, entry, row)
        return ranked[0]["type"] if ranked else None

    def excerpt(entry: FileEntry, row: int) -> dict:
        span = entry.spans.get(row)
        if span is None:
            return {"line": None, "text": ""}
        lines = entry.source.splitlines()
        text = lines[span.line - 1] if 0 < span.line <= len(lines) else ""
        return {"line": span.line, "text": text.strip()}

    def snapshot_top1(session: Session) -> dict[str, Optional[str]]:
        state: dict[str, Optional[str]] = {}
        for entry in files.values():
            for row in pending_rows(entry, session):
                state[symbol_id_of(entry, row)] = top1(session, entry, row)
        return state

    @app.post("/api/session")
    def create_session() -> dict:
        session = new_session()
        return {"session_id": session.id}

    @app.get("/api/files")
    def list_files(session: Optional[str] = Query(default=None)) -> dict:
        current = get_session(session)
        return {
            "files": [
                {
                    "id": entry.file_id,
                    "symbols": len(entry.symbols),
                    "pending": len(pending_rows(entry, current)),
                }
                for entry in files.values()
            ]
        }

    @app.get("/api/suggestions")
    def suggestions(file: str, session: Optional[str] = Query(default=None)) -> dict:
        current = get_session(session)
        entry = files.get(file)
        if entry is None:
            raise HTTPException(404, f"unknown file {file!r}")
        items = []
        for row in pending_rows(entry, current):
            cands = candidates_for(current, entry, row)
            sid = symbol_id_of(entry, row)
            items.append({
                "symbol_id": sid,
                "name": entry.symbols[row].name,
                "kind": entry.symbols[row].kind,
                "excerpt": excerpt(entry, row),
                "candidates": cands,
                "confidence": cands[0]["probability"] if cands else 0.0,
                "needs_manual": not cands,
            })
        items.sort(key=lambda it: -it["confidence"])
        return {"file": file, "suggestions": items}

    @app.post("/api/accept")
    def accept(body: AcceptBody) -> dict:
        session = get_session(body.session_id)
        entry, row = locate(body.symbol_id)
        with session.lock:
            if body.symbol_id in session.decisions:
                raise HTTPException(409, f"{body.symbol_id} already decided")
            try:
                chosen = normalize_type(parse_type(body.type))
            except TypeParseError as exc:
                raise HTTPException(422, f"malformed type: {exc}") from None
            if chosen == ANY:
                raise HTTPException(422, "the top type cannot be bound")
            before = snapshot_top1(session)
            verdict = None
            if checker_command:
                sym = entry.symbols[row]
                verdict = checker_hook(entry.source, sym.kind, sym.name,
                                       chosen.render(), checker_command).verdict
            session.working_map.add_binding(entry.embeddings[row], chosen, "accepted")
            session.decisions[body.symbol_id] = {
                "action": "accept", "type": chosen.render(),
            }
            session.log.append({
                "seq": len(session.log),
                "symbol_id": body.symbol_id,
                "action": "accept",
                "type": chosen.render(),
                "timestamp": time.time(),
            })
            after = snapshot_top1(session)
            reranked = sorted(
                sid for sid, prev in before.items()
                if sid != body.symbol_id and after.get(sid) != prev
            )
            return {
                "accepted": body.symbol_id,
                "type": chosen.render(),
                "checker": verdict,
                "reranked": reranked,
                "map_size": len(session.working_map),
            }

    @app.post("/api/reject")
    def reject(body: RejectBody) -> dict:
        session = get_session(body.session_id)
        entry, row = locate(body.symbol_id)
        with session.lock:
            if body.symbol_id in session.decisions:
                raise HTTPException(409, f"{body.symbol_id} already decided")
            session.rejected.setdefault(body.symbol_id, set()).add(body.type)
            session.log.append({
                "seq": len(session.log),
                "symbol_id": body.symbol_id,
                "action": "reject",
                "type": body.type,
                "timestamp": time.time(),
            })
            remaining = candidates_for(session, entry, row)
            return {
                "rejected": body.symbol_id,
                "type": body.type,
                "remaining_candidates": len(remaining),
                "needs_manual": not remaining,
            }

    @app.get("/api/neighbors")
    def neighbors(symbol_id: str, k: int = Query(default=10, ge=1),
                  session: Optional[str] = Query(default=None)) -> dict:
        current = get_session(session)
        entry, row = locate(symbol_id)
        try:
            found = current.working_map.nearest(entry.embeddings[row], k)
        except EmptyMapError:
            found = []
        markers = current.working_map.markers
        return {
            "symbol_id": symbol_id,
            "neighbors": [
                {
                    "type": markers[idx].type.render(),
                    "distance": dist,
                    "provenance": markers[idx].provenance,
                }
                for idx, dist in found
            ],
        }

    @app.get("/api/session/{session_id}/log")
    def get_log(session_id: str) -> dict:
        session = get_session(session_id)
        return {"session_id": session_id, "decisions": list(session.log)}

    @app.get("/api/patches")
    def patches(session: Optional[str] = Query(default=None)) -> dict:
        """Patch suggestions for every accepted binding: the annotated
        source line to apply by hand (files are never edited in place)."""
        from .checker import annotate_source

        current = get_session(session)
        out = []
        for sid, decision in current.decisions.items():
            if decision["action"] != "accept":
                continue
            entry, row = locate(sid)
            sym = entry.symbols[row]
            edited = annotate_source(entry.source, sym.kind, sym.name, decision["type"])
            patched_line = None
            if edited is not None:
                span = entry.spans.get(row)
                if span is not None:
                    lines = edited.splitlines()
                    if 0 < span.line <= len(lines):
                        patched_line = lines[span.line - 1]
            out.append({
                "file": entry.file_id,
                "symbol_id": sid,
                "name": sym.name,
                "kind": sym.kind,
                "type": decision["type"],
                "line": entry.spans[row].line if row in entry.spans else None,
                "patched_line": patched_line,
                "supported": edited is not None,
            })
        out.sort(key=lambda item: (item["file"], item["symbol_id"]))
        return {"patches": out}

    @app.get("/api/export-map")
    def export_map(session: Optional[str] = Query(default=None)) -> Response:
        import tempfile
        import os

        current = get_session(session)
        with tempfile.NamedTemporaryFile(delete=False) as tmp:
            path = tmp.name
        try:
            save_map(path, current.working_map)
            blob = Path(path).read_bytes()
        finally:
            os.unlink(path)
        return Response(content=blob, media_type="application/octet-stream",
                        headers={"Content-Disposition": "attachment; filename=typemap.bin"})

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
