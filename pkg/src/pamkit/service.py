"""HTTP service backing the cluster-review UI.

All JSON endpoints read a shared state object; every store mutation funnels
through one lock (single-writer discipline). Re-clustering runs as a
background job the client polls.
"""
from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .audio import AudioClip
from .cluster import ClusterAssignment, Embedding, iterate_noise
from .config import PipelineConfig
from .errors import ConflictError, UnknownSegmentError
from .features import featurize
from .render import render_spectrogram_png
from .store import NEGATIVE_LABEL, DatasetStore

AudioProvider = Callable[[str], AudioClip | None]


@dataclass
class ClusterState:
    """Mutable clustering view shared by the service handlers."""

    assignments: list[ClusterAssignment] = field(default_factory=list)
    embeddings: list[Embedding] = field(default_factory=list)
    coords_2d: dict[str, tuple[float, float]] = field(default_factory=dict)

    def by_cluster(self) -> dict[int, list[ClusterAssignment]]:
        out: dict[int, list[ClusterAssignment]] = {}
        for a in self.assignments:
            out.setdefault(a.cluster_id, []).append(a)
        return out


class LabelBody(BaseModel):
    label: str
    status: str = "validated"
    annotator: str = ""
    note: str | None = None
    decision_id: str | None = None


class ValidateBody(BaseModel):
    label: str | None = None
    annotator: str = ""
    decision_id: str | None = None


class RejectBody(BaseModel):
    annotator: str = ""
    decision_id: str | None = None


class ReclusterBody(BaseModel):
    max_iterations: int = 3


def create_app(
    store: DatasetStore,
    state: ClusterState,
    config: PipelineConfig,
    audio_provider: AudioProvider | None = None,
) -> FastAPI:
    app = FastAPI(title="pamkit review service")
    write_lock = threading.Lock()
    jobs: dict[str, dict] = {}
    known_labels = set(config.species_order) | {NEGATIVE_LABEL}

    def cluster_or_404(cluster_id: int) -> list[ClusterAssignment]:
        members = state.by_cluster().get(cluster_id)
        if not members:
            raise HTTPException(status_code=404, detail=f"unknown cluster {cluster_id}")
        return members

    def check_label(label: str) -> None:
        if label not in known_labels:
            raise HTTPException(status_code=422, detail=f"unknown label {label!r}")

    @app.get("/api/clusters")
    def list_clusters() -> list[dict]:
        current = store.current_labels()
        out = []
        for cid, members in state.by_cluster().items():
            if cid < 0:
                continue
            progress = {"validated": 0, "rejected": 0, "pending": 0}
            for a in members:
                rec = current.get(a.segment_id)
                if rec is None or rec.status == "suggested":
                    progress["pending"] += 1
                elif rec.status == "validated":
                    progress["validated"] += 1
                else:
                    progress["rejected"] += 1
            suggestion = next((a.suggested_label for a in members if a.suggested_label), None)
            out.append(
                {
                    "cluster_id": cid,
                    "size": len(members),
                    "suggested_label": suggestion,
                    "iteration": max(a.iteration for a in members),
                    "progress": progress,
                }
            )
        out.sort(key=lambda c: (-c["size"], c["cluster_id"]))
        return out

    @app.get("/api/clusters/{cluster_id}/segments")
    def cluster_segments(cluster_id: int, page: int = 0, page_size: int = 50) -> dict:
        members = cluster_or_404(cluster_id)
        members = sorted(members, key=lambda a: a.segment_id)
        start = page * page_size
        chunk = members[start : start + page_size]
        current = store.current_labels()
        rows = []
        for a in chunk:
            seg = store.get_segment(a.segment_id)
            rec = current.get(a.segment_id)
            xy = state.coords_2d.get(a.segment_id)
            rows.append(
                {
                    "segment_id": a.segment_id,
                    "source_id": seg.source_id,
                    "t_start_s": seg.t_start_s,
                    "t_end_s": seg.t_end_s,
                    "species_hint": seg.species_hint,
                    "membership_strength": a.membership_strength,
                    "xy": list(xy) if xy else None,
                    "current_label": rec.label if rec else None,
                    "current_status": rec.status if rec else None,
                }
            )
        return {
            "cluster_id": cluster_id,
            "page": page,
            "page_size": page_size,
            "total": len(members),
            "segments": rows,
        }

    def segment_clip(segment_id: str) -> AudioClip:
        try:
            store.get_segment(segment_id)
        except UnknownSegmentError:
            raise HTTPException(status_code=404, detail=f"unknown segment {segment_id}")
        clip = audio_provider(segment_id) if audio_provider else None
        if clip is None:
            raise HTTPException(status_code=404, detail=f"no audio for segment {segment_id}")
        return clip

    @app.get("/api/segments/{segment_id}/spectrogram.png")
    def segment_spectrogram(segment_id: str) -> Response:
        clip = segment_clip(segment_id)
        seg = store.get_segment(segment_id)
        species = seg.species_hint or ""
        name = "LF" if species in config.lf_species else "MF"
        feature = featurize(clip, config.mel[name], segment_id=segment_id)
        return Response(content=render_spectrogram_png(feature.values), media_type="image/png")

    @app.get("/api/segments/{segment_id}/audio.wav")
    def segment_audio(segment_id: str) -> Response:
        clip = segment_clip(segment_id)
        buf = io.BytesIO()
        import wave

        with wave.open(buf, "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(clip.sample_rate_hz)
            scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
            wf.writeframes(scaled.tobytes())
        return Response(content=buf.getvalue(), media_type="audio/wav")

    @app.post("/api/segments/{segment_id}/label")
    def label_segment(segment_id: str, body: LabelBody) -> dict:
        check_label(body.label)
        if body.status not in ("suggested", "validated", "rejected"):
            raise HTTPException(status_code=422, detail=f"bad status {body.status!r}")
        with write_lock:
            try:
                rec = store.record_decision(
                    segment_id,
                    body.label,
                    status=body.status,
                    annotator=body.annotator,
                    note=body.note,
                    decision_id=body.decision_id,
                )
            except UnknownSegmentError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            except ConflictError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "seq": rec.seq, "segment_id": rec.segment_id}

    @app.post("/api/clusters/{cluster_id}/validate")
    def validate_cluster(cluster_id: int, body: ValidateBody) -> dict:
        members = cluster_or_404(cluster_id)
        label = body.label or next(
            (a.suggested_label for a in members if a.suggested_label), None
        )
        if not label:
            raise HTTPException(status_code=422, detail="no label given and no suggestion")
        check_label(label)
        with write_lock:
            try:
                for i, a in enumerate(sorted(members, key=lambda m: m.segment_id)):
                    per_segment = f"{body.decision_id}:{i}" if body.decision_id else None
                    store.record_decision(a.segment_id, label, status="validated",
                                          annotator=body.annotator, decision_id=per_segment)
            except ConflictError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "cluster_id": cluster_id, "label": label, "count": len(members)}

    @app.post("/api/clusters/{cluster_id}/reject")
    def reject_cluster(cluster_id: int, body: RejectBody) -> dict:
        members = cluster_or_404(cluster_id)
        with write_lock:
            try:
                count = store.reject_cluster(
                    [a.segment_id for a in members],
                    annotator=body.annotator,
                    decision_id=body.decision_id,
                )
            except ConflictError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "cluster_id": cluster_id, "count": count}

    @app.post("/api/recluster")
    def recluster(body: ReclusterBody) -> dict:
        job_id = uuid.uuid4().hex[:12]
        jobs[job_id] = {"status": "running", "new_clusters": 0}

        def run() -> None:
            try:
                with write_lock:
                    before = {a.cluster_id for a in state.assignments if a.cluster_id >= 0}
                    updated = iterate_noise(
                        state.embeddings,
                        state.assignments,
                        config.reduction,
                        config.density,
                        max_iterations=body.max_iterations,
                    )
                    state.assignments = updated
                    after = {a.cluster_id for a in updated if a.cluster_id >= 0}
                jobs[job_id] = {
                    "status": "done",
                    "new_clusters": len(after - before),
                }
            except Exception as exc:  # surface failures to the poller
                jobs[job_id] = {"status": "failed", "error": str(exc)}

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        if job_id not in jobs:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return {"job_id": job_id, **jobs[job_id]}

    @app.get("/api/stats")
    def stats() -> dict:
        current = store.current_labels()
        by_label: dict[str, dict[str, int]] = {}
        for rec in current.values():
            row = by_label.setdefault(rec.label, {"validated": 0, "rejected": 0, "suggested": 0})
            row[rec.status] += 1
        noise = sum(1 for a in state.assignments if a.cluster_id == -1)
        return {
            "total_segments": len(store.segments()),
            "decisions": len(store.label_log()),
            "labels": by_label,
            "noise_count": noise,
            "clusters": len({a.cluster_id for a in state.assignments if a.cluster_id >= 0}),
        }

    return app
