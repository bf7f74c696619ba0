"""HTTP JSON API for the review workflow (backs the browser dashboard).

Endpoints:
    GET  /projects
    GET  /projects/{id}/scenes
    GET  /projects/{id}/scenes/{sid}
    POST /projects/{id}/scenes/{sid}/verdict     {criterion, verdict, note, version}
    POST /projects/{id}/scenes/{sid}/regenerate  {track, note, version}
    POST /projects/{id}/scenes/{sid}/submit      {version?}
    GET  /projects/{id}/manifest
Status codes: 200, 404, 409 (version conflict), 422 (validation).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import assembly
from .generation import (
    CODE,
    NARRATION,
    GeneratorBackend,
    MaxAttemptsExceeded,
    TemplateBackend,
    regenerate_part,
)
from .plan_model import plan_from_json
from .review import (
    IllegalTransition,
    MissingNote,
    ProjectStore,
    SceneRecord,
    UnknownScene,
    VersionConflict,
)
from .sync import DEFAULT_TOLERANCE_S, timeline_from_json


class VerdictRequest(BaseModel):
    criterion: str
    verdict: str
    note: str = ""
    version: int


class RegenerateRequest(BaseModel):
    track: str
    note: str
    version: int


class SubmitRequest(BaseModel):
    version: Optional[int] = None


def _scene_payload(record: SceneRecord, tolerance_s: float = DEFAULT_TOLERANCE_S) -> dict:
    return {
        "scene_id": record.scene_id,
        "state": record.state,
        "version": record.version,
        "artifact_versions": record.artifact_versions,
        "review": {
            "criteria": record.review.criteria,
            "reviewer_note": record.review.reviewer_note,
            "decided_at": record.review.decided_at,
        },
        "tolerance_s": tolerance_s,
    }


class ReviewService:
    def __init__(self, root: Path, backend: Optional[GeneratorBackend] = None,
                 tolerance_s: float = DEFAULT_TOLERANCE_S):
        self.root = Path(root)
        self.store = ProjectStore(self.root)
        self.backend = backend or TemplateBackend()
        self.tolerance_s = tolerance_s
        self._register_existing_projects()

    def _register_existing_projects(self) -> None:
        for plan_path in sorted(self.root.glob("*/plan.json")):
            project_id = plan_path.parent.name
            plan = plan_from_json(json.loads(plan_path.read_text()))
            for scene in plan.scenes:
                self.store.register_scene(project_id, scene.scene_id)
                record = self.store.scene(project_id, scene.scene_id)
                report_path = plan_path.parent / "validation" / f"{scene.scene_id}.json"
                if record.state != "draft" or not report_path.exists():
                    continue
                report = json.loads(report_path.read_text())
                # a stale report (checked before a regeneration) does not count
                if report.get("passed") and report.get("checked_versions") == record.artifact_versions:
                    self.store.mark_validated(project_id, scene.scene_id)

    def project_dir(self, project_id: str) -> Path:
        path = self.root / project_id
        if not path.exists():
            raise UnknownScene(project_id)
        return path

    def scene_detail(self, project_id: str, scene_id: int) -> dict:
        record = self.store.scene(project_id, scene_id)
        root = self.project_dir(project_id)
        payload = _scene_payload(record, self.tolerance_s)

        artifacts = assembly.load_artifacts(root).get(scene_id, {})
        payload["artifacts"] = {
            track: {"version": a.version, "content": a.content,
                    "provenance": vars(a.provenance)}
            for track, a in artifacts.items()
        }
        timeline_path = root / "timelines" / f"{scene_id}.json"
        if timeline_path.exists():
            timeline = json.loads(timeline_path.read_text())
            payload["timeline"] = timeline
            t = timeline_from_json(timeline)
            drifts = []
            for binding in t.bindings:
                drift = abs(t.cue(binding.cue_id).start_s - t.event(binding.event_id).start_s)
                drifts.append({"cue_id": binding.cue_id, "event_id": binding.event_id,
                               "drift_s": round(drift, 6)})
            payload["binding_drifts"] = drifts
        report_path = root / "validation" / f"{scene_id}.json"
        if report_path.exists():
            payload["validation"] = json.loads(report_path.read_text())
        return payload

    def regenerate(self, project_id: str, scene_id: int, track: str, note: str,
                   version: int) -> dict:
        if track not in (NARRATION, CODE):
            raise MissingNote(f"track must be narration or code, got {track!r}")
        root = self.project_dir(project_id)
        self.store.request_regeneration(project_id, scene_id, track, note, version)
        plan = plan_from_json(json.loads((root / "plan.json").read_text()))
        artifacts = assembly.load_artifacts(root)
        artifact = regenerate_part(plan, artifacts, scene_id, track, note, self.backend)
        assembly.write_artifact(root, artifact)
        record = self.store.notify_artifact(project_id, scene_id, track, artifact.version)
        return _scene_payload(record, self.tolerance_s)


def create_app(root: Path, backend: Optional[GeneratorBackend] = None,
               tolerance_s: float = DEFAULT_TOLERANCE_S) -> FastAPI:
    service = ReviewService(root, backend, tolerance_s)
    app = FastAPI(title="scenesmith review API")
    app.state.service = service

    def _guard(fn):
        try:
            return fn()
        except UnknownScene as exc:
            raise HTTPException(404, str(exc)) from exc
        except VersionConflict as exc:
            raise HTTPException(409, str(exc)) from exc
        except (MissingNote, IllegalTransition, ValueError) as exc:
            raise HTTPException(422, str(exc)) from exc
        except MaxAttemptsExceeded as exc:
            raise HTTPException(422, str(exc)) from exc

    @app.get("/projects")
    def list_projects():
        return service.store.projects()

    @app.get("/projects/{project_id}/scenes")
    def list_scenes(project_id: str):
        scenes = service.store.scenes(project_id)
        if not scenes and not (service.root / project_id).exists():
            raise HTTPException(404, f"unknown project {project_id}")
        return [_scene_payload(r, service.tolerance_s) for r in scenes]

    @app.get("/projects/{project_id}/scenes/{scene_id}")
    def scene_detail(project_id: str, scene_id: int):
        return _guard(lambda: service.scene_detail(project_id, scene_id))

    @app.post("/projects/{project_id}/scenes/{scene_id}/submit")
    def submit(project_id: str, scene_id: int, body: SubmitRequest):
        return _guard(lambda: _scene_payload(
            service.store.submit_for_review(project_id, scene_id, body.version),
            service.tolerance_s))

    @app.post("/projects/{project_id}/scenes/{scene_id}/verdict")
    def verdict(project_id: str, scene_id: int, body: VerdictRequest):
        return _guard(lambda: _scene_payload(
            service.store.record_verdict(project_id, scene_id, body.criterion,
                                         body.verdict, body.note, body.version),
            service.tolerance_s))

    @app.post("/projects/{project_id}/scenes/{scene_id}/regenerate")
    def regenerate(project_id: str, scene_id: int, body: RegenerateRequest):
        return _guard(lambda: service.regenerate(project_id, scene_id, body.track,
                                                 body.note, body.version))

    @app.get("/projects/{project_id}/manifest")
    def manifest(project_id: str):
        path = service.root / project_id / assembly.MANIFEST_NAME
        if not path.exists():
            raise HTTPException(404, f"no manifest for project {project_id}")
        return json.loads(path.read_text())

    return app


def serve_api(root: Path, port: int = 8008, host: str = "127.0.0.1",
              backend: Optional[GeneratorBackend] = None) -> None:
    """Run the review API (blocking)."""
    import uvicorn

    uvicorn.run(create_app(root, backend), host=host, port=port, log_level="warning")
