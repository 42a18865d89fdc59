"""HTTP audit service: serves clips and spectrograms, records verdicts.

The service is the single integration surface for the review UI. Verdict
writes are serialized through one lock and are durable before the response
is sent; wrong-onset verdicts re-extract the clip from its source recording
and no-bird verdicts replace the clip from unused regions of the same
recording.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from . import audit as audit_mod
from . import segments
from .audio_io import decode_and_resample
from .errors import (BirdcorpusError, DuplicateVerdict, IncompleteRound,
                     MissingClip, UnknownClip)
from .manifest import read_manifest, write_manifest


class VerdictBody(BaseModel):
    clip_id: str
    outcome: str
    corrected_start_s: Optional[float] = None
    auditor: str = ""


class AuditState:
    """Workspace-backed state for one audit round."""

    def __init__(self, workspace, round_id: int = 1, token: Optional[str] = None):
        self.root = Path(workspace)
        self.round_id = round_id
        self.token = token
        self.lock = threading.Lock()
        plan_path = self.root / "audit" / f"round_{round_id}" / "plan.json"
        if not plan_path.exists():
            raise MissingClip(f"no audit plan at {plan_path} (run audit-sample first)")
        raw = json.loads(plan_path.read_text())
        self.plan = audit_mod.AuditPlan(**raw)
        self.log = audit_mod.VerdictLog(
            self.root / "audit" / f"round_{round_id}" / "verdicts.csv")
        self.manifest_path = self.root / "manifests" / "final.csv"
        if not self.manifest_path.exists():
            self.manifest_path = self.root / "manifests" / "merged.csv"
        self._cache_dir = self.root / "audit" / "cache"
        self._cache_dir.mkdir(parents=True, exist_ok=True)

    # -- resolution helpers --

    def clip_path(self, clip_id: str) -> Path:
        path = self.root / "clips" / "pos" / f"{clip_id}.wav"
        if not path.exists():
            raise MissingClip(f"clip {clip_id} not on disk")
        return path

    def manifest_rows(self):
        return read_manifest(self.manifest_path)

    def manifest_row(self, clip_id: str):
        for row in self.manifest_rows():
            if row.clip_id == clip_id:
                return row
        raise UnknownClip(f"{clip_id} not in manifest")

    def source_flac(self, catalog_id: int) -> Path:
        path = self.root / "audio" / f"XC{catalog_id}.flac"
        if not path.exists():
            raise MissingClip(f"source recording XC{catalog_id} not on disk")
        return path

    def judged_ids(self) -> set[str]:
        return {v.clip_id for v in self.log.load() if v.round_id == self.round_id}

    def progress(self) -> dict:
        judged = self.judged_ids()
        return {"done": len(judged), "total": len(self.plan.sampled_clip_ids)}

    # -- verdict side effects --

    def _reextract(self, clip_id: str, corrected_start_s: float) -> None:
        row = self.manifest_row(clip_id)
        source = decode_and_resample(self.source_flac(row.catalog_id))
        cand = segments.SegmentCandidate(start_s=corrected_start_s, rms=0.0,
                                         source_catalog_id=row.catalog_id)
        clip = segments.extract(source, cand)
        from .audio_io import write_wav

        write_wav(clip, self.clip_path(clip_id))
        rows = self.manifest_rows()
        for r in rows:
            if r.clip_id == clip_id:
                r.start_s = corrected_start_s
        write_manifest(self.manifest_path, rows)
        (self._cache_dir / f"{clip_id}.png").unlink(missing_ok=True)

    def _replace_no_bird(self, clip_id: str) -> Optional[str]:
        row = self.manifest_row(clip_id)
        source = decode_and_resample(self.source_flac(row.catalog_id))
        rows = self.manifest_rows()
        used_starts = [r.start_s for r in rows
                       if r.catalog_id == row.catalog_id and r.clip_id != clip_id]
        cands = segments.scan_windows(source, row.catalog_id)
        cands = [c for c in cands
                 if all(abs(c.start_s - s) >= segments.MIN_SEPARATION_S for s in used_starts)
                 and abs(c.start_s - row.start_s) >= segments.MIN_SEPARATION_S]
        chosen = segments.select_clips(cands, max_clips=1)

        self.clip_path(clip_id).unlink()
        rows = [r for r in rows if r.clip_id != clip_id]
        replacement_id = None
        if chosen:
            cand = chosen[0]
            clip = segments.extract(source, cand)
            replacement_id = segments.clip_filename(row.catalog_id, cand.start_s)[:-4]
            from .audio_io import write_wav

            write_wav(clip, self.root / "clips" / "pos" / f"{replacement_id}.wav")
            from dataclasses import replace as dc_replace

            rows.append(dc_replace(row, clip_id=replacement_id, start_s=cand.start_s,
                                   salience=None, cluster_id=None))
        write_manifest(self.manifest_path, rows)
        return replacement_id

    def record(self, body: VerdictBody) -> dict:
        verdict = audit_mod.AuditVerdict(
            clip_id=body.clip_id, outcome=body.outcome,
            corrected_start_s=body.corrected_start_s, auditor=body.auditor,
            round_id=self.round_id)
        with self.lock:
            audit_mod.record_verdict(self.log, self.plan, verdict)
            side_effect = {}
            if verdict.outcome == "wrong_onset":
                self._reextract(verdict.clip_id, verdict.corrected_start_s)
                side_effect["reextracted_at_s"] = verdict.corrected_start_s
            elif verdict.outcome == "no_bird":
                replacement = self._replace_no_bird(verdict.clip_id)
                side_effect["replacement_clip_id"] = replacement
        return {"recorded": True, "clip_id": verdict.clip_id,
                "outcome": verdict.outcome, **side_effect,
                "progress": self.progress()}


def create_app(state: AuditState) -> FastAPI:
    app = FastAPI(title="audit service")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if state.token and request.url.path.startswith("/api"):
            if request.headers.get("x-auth-token") != state.token:
                return JSONResponse({"detail": "invalid or missing token"}, status_code=401)
        return await call_next(request)

    @app.exception_handler(BirdcorpusError)
    async def domain_error(request: Request, exc: BirdcorpusError):
        status = 409 if isinstance(exc, (DuplicateVerdict, IncompleteRound)) else 404
        return JSONResponse({"detail": str(exc)}, status_code=status)

    @app.get("/api/plan")
    def get_plan():
        return {**state.plan.to_dict(), "progress": state.progress()}

    @app.get("/api/clips/next")
    def next_clip(auditor: str = ""):
        judged = state.judged_ids()
        for i, clip_id in enumerate(state.plan.sampled_clip_ids):
            if clip_id not in judged:
                return {"clip_id": clip_id, "index": i,
                        "page": i // (audit_mod.GRID_ROWS * audit_mod.GRID_COLS),
                        "progress": state.progress()}
        return {"clip_id": None, "progress": state.progress()}

    @app.get("/api/clips/{clip_id}/audio.wav")
    def clip_audio(clip_id: str):
        return FileResponse(state.clip_path(clip_id), media_type="audio/wav")

    @app.get("/api/clips/{clip_id}/spectrogram.png")
    def clip_spectrogram(clip_id: str):
        cached = state._cache_dir / f"{clip_id}.png"
        if not cached.exists():
            buf = decode_and_resample(state.clip_path(clip_id))
            pixels = audit_mod.spectrogram_pixels(buf, 768, 404)
            from PIL import Image

            Image.fromarray(pixels).save(cached, format="PNG")
        return FileResponse(cached, media_type="image/png")

    @app.get("/api/clips/{clip_id}/source-info")
    def source_info(clip_id: str):
        row = state.manifest_row(clip_id)
        source = decode_and_resample(state.source_flac(row.catalog_id))
        return {"clip_id": clip_id, "catalog_id": row.catalog_id,
                "duration_s": source.duration_s, "start_s": row.start_s}

    @app.get("/api/clips/{clip_id}/source-spectrogram.png")
    def source_spectrogram(clip_id: str):
        row = state.manifest_row(clip_id)
        cached = state._cache_dir / f"src_XC{row.catalog_id}.png"
        if not cached.exists():
            source = decode_and_resample(state.source_flac(row.catalog_id))
            pixels = audit_mod.spectrogram_pixels(source, 1920, 512)
            from PIL import Image

            Image.fromarray(pixels).save(cached, format="PNG")
        return FileResponse(cached, media_type="image/png")

    @app.post("/api/verdicts")
    def post_verdict(body: VerdictBody):
        try:
            return state.record(body)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/api/summary")
    def summary():
        return audit_mod.audit_summary(state.plan, state.log.load())

    return app


def serve(workspace, round_id: int = 1, host: str = "127.0.0.1", port: int = 8777,
          token: Optional[str] = None) -> None:
    import uvicorn

    app = create_app(AuditState(workspace, round_id=round_id, token=token))
    uvicorn.run(app, host=host, port=port, log_level="info")
