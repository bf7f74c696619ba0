"""Merging approved tracks into renderable outputs, captions, the build
manifest, and the regression-scene harness.

Project directory layout:
    brief.json, plan.json,
    artifacts/<scene>/<track>.vN.txt,
    timelines/<scene>.json, validation/<scene>.json,
    out/scene_<n>.py, out/narration.txt, out/captions.vtt,
    manifest.json, regression/<name>/{inputs.json,baseline.json}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .engines import RenderEngine, trace_digest
from .generation import (
    CODE,
    NARRATION,
    DraftArtifact,
    GeneratorBackend,
    draft_scene,
)
from .plan_model import LessonPlan, plan_from_json, plan_to_json
from .sync import NarrationCue, Timeline, timeline_from_json, timeline_to_json

MANIFEST_NAME = "manifest.json"

REGRESSION_DRIFT_THRESHOLD_S = 0.25


class UnmergedScene(RuntimeError):
    def __init__(self, scene_id: int):
        super().__init__(f"scene {scene_id} has not been routed to merge")
        self.scene_id = scene_id


class OverlappingCues(ValueError):
    pass


class MissingBaseline(RuntimeError):
    def __init__(self, scene_ref: str):
        super().__init__(f"regression scene {scene_ref} has no blessed baseline")
        self.scene_ref = scene_ref


# --- artifact persistence ------------------------------------------------------

def artifact_path(root: Path, artifact: DraftArtifact) -> Path:
    return root / "artifacts" / str(artifact.scene_id) / f"{artifact.track}.v{artifact.version}.txt"


def write_artifact(root: Path, artifact: DraftArtifact) -> Path:
    path = artifact_path(root, artifact)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(artifact.content)
    meta = path.with_suffix(".meta.json")
    meta.write_text(json.dumps({
        "scene_id": artifact.scene_id,
        "track": artifact.track,
        "version": artifact.version,
        "provenance": vars(artifact.provenance),
    }, indent=2, sort_keys=True))
    return path


def load_artifacts(root: Path) -> dict[int, dict[str, DraftArtifact]]:
    """Load the latest version of each (scene, track) artifact."""
    from .generation import Provenance

    artifacts: dict[int, dict[str, DraftArtifact]] = {}
    base = root / "artifacts"
    if not base.exists():
        return artifacts
    for meta_path in sorted(base.rglob("*.meta.json")):
        meta = json.loads(meta_path.read_text())
        content_path = meta_path.with_suffix("").with_suffix(".txt")
        artifact = DraftArtifact(
            scene_id=meta["scene_id"],
            track=meta["track"],
            content=content_path.read_text(),
            version=meta["version"],
            provenance=Provenance(**meta["provenance"]),
        )
        slot = artifacts.setdefault(artifact.scene_id, {})
        if artifact.track not in slot or slot[artifact.track].version < artifact.version:
            slot[artifact.track] = artifact
    return artifacts


# --- captions -------------------------------------------------------------------

def _vtt_timestamp(seconds: float) -> str:
    ms = round(seconds * 1000)
    h, rem = divmod(ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d}.{ms:03d}"


def emit_captions(cues: Sequence[NarrationCue]) -> str:
    """WebVTT document; one block per cue, end clamped to the next start."""
    ordered = sorted(cues, key=lambda c: c.start_s)
    for a, b in zip(ordered, ordered[1:]):
        if a.start_s == b.start_s:
            raise OverlappingCues(f"cues {a.cue_id} and {b.cue_id} start together at {a.start_s} s")
    blocks = ["WEBVTT", ""]
    for i, cue in enumerate(ordered):
        end = cue.start_s + cue.est_duration_s
        if i + 1 < len(ordered):
            end = min(end, ordered[i + 1].start_s)
        if end <= cue.start_s:
            raise OverlappingCues(f"cue {cue.cue_id} has no room before the next cue")
        blocks.append(f"{_vtt_timestamp(cue.start_s)} --> {_vtt_timestamp(end)}")
        blocks.append(cue.text)
        blocks.append("")
    return "\n".join(blocks)


# --- merge ---------------------------------------------------------------------

@dataclass(frozen=True)
class MergedBundle:
    scene_scripts: dict  # scene_id -> script text
    narration_text: str
    captions_vtt: str
    scene_order: tuple[int, ...]


def merge_project(plan: LessonPlan, artifacts: Mapping[int, Mapping[str, DraftArtifact]],
                  timelines: Mapping[int, Timeline],
                  merged_scene_ids: Optional[set[int]] = None) -> MergedBundle:
    """Merge both tracks of every scene; scene offsets accumulate so narration
    and caption timestamps are absolute within the video."""
    scene_ids = tuple(s.scene_id for s in plan.scenes)
    for sid in scene_ids:
        if merged_scene_ids is not None and sid not in merged_scene_ids:
            raise UnmergedScene(sid)
        if sid not in artifacts or CODE not in artifacts[sid] or NARRATION not in artifacts[sid]:
            raise UnmergedScene(sid)
        if sid not in timelines:
            raise UnmergedScene(sid)

    scripts = {sid: artifacts[sid][CODE].content for sid in scene_ids}

    offset = 0.0
    narration_lines = []
    absolute_cues: list[NarrationCue] = []
    for scene in plan.scenes:
        t = timelines[scene.scene_id]
        narration_lines.append(f"# scene {scene.scene_id} (offset {offset:.1f} s)")
        for cue in sorted(t.cues, key=lambda c: c.start_s):
            abs_cue = NarrationCue(cue.cue_id, cue.scene_id, cue.text,
                                   round(cue.start_s + offset, 3), cue.est_duration_s)
            absolute_cues.append(abs_cue)
            narration_lines.append(f"[{abs_cue.start_s:.1f}] {cue.text}")
        offset += t.scene_duration_s

    return MergedBundle(
        scene_scripts=scripts,
        narration_text="\n".join(narration_lines) + "\n",
        captions_vtt=emit_captions(absolute_cues),
        scene_order=scene_ids,
    )


def write_bundle(root: Path, bundle: MergedBundle) -> None:
    out = root / "out"
    out.mkdir(parents=True, exist_ok=True)
    for sid in bundle.scene_order:
        (out / f"scene_{sid}.py").write_text(bundle.scene_scripts[sid])
    (out / "narration.txt").write_text(bundle.narration_text)
    (out / "captions.vtt").write_text(bundle.captions_vtt)


# --- build manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class BuildManifest:
    project_id: str
    model_id: str
    prompt_versions: dict
    seeds: tuple[int, ...]
    engine_id: str
    engine_version: str
    latex_version: str
    artifact_digests: dict
    created_at: str

    def to_json(self) -> dict:
        return {
            "project_id": self.project_id,
            "model_id": self.model_id,
            "prompt_versions": dict(sorted(self.prompt_versions.items())),
            "seeds": list(self.seeds),
            "engine_id": self.engine_id,
            "engine_version": self.engine_version,
            "latex_version": self.latex_version,
            "artifact_digests": dict(sorted(self.artifact_digests.items())),
            "created_at": self.created_at,
        }

    @staticmethod
    def from_json(data: dict) -> "BuildManifest":
        return BuildManifest(
            project_id=data["project_id"],
            model_id=data["model_id"],
            prompt_versions=data["prompt_versions"],
            seeds=tuple(data["seeds"]),
            engine_id=data["engine_id"],
            engine_version=data["engine_version"],
            latex_version=data["latex_version"],
            artifact_digests=data["artifact_digests"],
            created_at=data["created_at"],
        )


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def project_digests(root: Path) -> dict[str, str]:
    digests = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.name == MANIFEST_NAME:
            continue
        digests[path.relative_to(root).as_posix()] = _sha256_file(path)
    return digests


def write_manifest(root: Path, project_id: str, model_id: str,
                   prompt_versions: Mapping[str, str], seeds: Sequence[int],
                   engine: RenderEngine) -> BuildManifest:
    manifest = BuildManifest(
        project_id=project_id,
        model_id=model_id,
        prompt_versions=dict(prompt_versions),
        seeds=tuple(seeds),
        engine_id=engine.engine_id,
        engine_version=engine.version,
        latex_version=engine.latex_version,
        artifact_digests=project_digests(root),
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_json(), indent=2))
    return manifest


def verify_manifest(root: Path, manifest: BuildManifest) -> bool:
    return project_digests(root) == manifest.artifact_digests


# --- render -------------------------------------------------------------------

@dataclass(frozen=True)
class RenderResult:
    scene_outputs: dict  # scene_id -> digest or video path
    combined_digest: str


def render(bundle: MergedBundle, engine: RenderEngine, seed: int = 0) -> RenderResult:
    """Render scenes in plan order; the combined digest is order-sensitive."""
    outputs = {}
    combined = hashlib.sha256()
    for sid in bundle.scene_order:
        result = engine.render_scene(sid, bundle.scene_scripts[sid], seed)
        outputs[sid] = result
        combined.update(f"{sid}:{result}\n".encode())
    return RenderResult(outputs, combined.hexdigest())


# --- regression harness ------------------------------------------------------------

@dataclass(frozen=True)
class RegressionScene:
    scene_ref: Path
    baseline_trace_digest: Optional[str] = None
    baseline_timeline: Optional[Timeline] = None

    @property
    def has_baseline(self) -> bool:
        return self.baseline_trace_digest is not None and self.baseline_timeline is not None


@dataclass(frozen=True)
class RegressionVerdict:
    scene_ref: str
    verdict: str  # "match" | "deviation"
    detail: str = ""


@dataclass(frozen=True)
class RegressionReport:
    verdicts: tuple[RegressionVerdict, ...]

    @property
    def deviations(self) -> tuple[RegressionVerdict, ...]:
        return tuple(v for v in self.verdicts if v.verdict == "deviation")


def save_regression_inputs(scene_ref: Path, plan: LessonPlan, scene_id: int, seed: int) -> None:
    scene_ref.mkdir(parents=True, exist_ok=True)
    (scene_ref / "inputs.json").write_text(json.dumps({
        "plan": plan_to_json(plan),
        "scene_id": scene_id,
        "seed": seed,
    }, indent=2, sort_keys=True))


def load_regression_scene(scene_ref: Path) -> RegressionScene:
    baseline_path = scene_ref / "baseline.json"
    if not baseline_path.exists():
        return RegressionScene(scene_ref)
    data = json.loads(baseline_path.read_text())
    return RegressionScene(
        scene_ref=scene_ref,
        baseline_trace_digest=data["trace_digest"],
        baseline_timeline=timeline_from_json(data["timeline"]),
    )


def _regenerate_scene(scene_ref: Path, backend: GeneratorBackend,
                      engine: RenderEngine) -> tuple[str, Timeline]:
    from .sync import extract_timeline

    inputs = json.loads((scene_ref / "inputs.json").read_text())
    plan = plan_from_json(inputs["plan"])
    scene = next(s for s in plan.scenes if s.scene_id == inputs["scene_id"])
    drafts = draft_scene(plan, scene, backend, inputs["seed"])
    trace = engine.dry_run(drafts[CODE].content, inputs["seed"], budget_s=30.0)
    timeline = extract_timeline(drafts[NARRATION], drafts[CODE], scene)
    return trace_digest(trace), timeline


def bless(scene_ref: Path, backend: GeneratorBackend, engine: RenderEngine) -> RegressionScene:
    """Regenerate the curated scene and freeze the result as the baseline."""
    digest, timeline = _regenerate_scene(scene_ref, backend, engine)
    (scene_ref / "baseline.json").write_text(json.dumps({
        "trace_digest": digest,
        "timeline": timeline_to_json(timeline),
    }, indent=2, sort_keys=True))
    return RegressionScene(scene_ref, digest, timeline)


def _timeline_deviates(baseline: Timeline, current: Timeline,
                       threshold_s: float = REGRESSION_DRIFT_THRESHOLD_S) -> Optional[str]:
    if len(baseline.events) != len(current.events):
        return f"event count changed {len(baseline.events)} -> {len(current.events)}"
    base_events = {e.event_id: e for e in baseline.events}
    for binding in current.bindings:
        event = current.event(binding.event_id)
        base = base_events.get(binding.event_id)
        if base is None:
            return f"event {binding.event_id} not in baseline"
        delta = abs(event.start_s - base.start_s)
        if delta > threshold_s:
            return f"binding {binding.cue_id}->{binding.event_id} moved {delta:.2f} s"
    return None


def regression_run(suite: Sequence[RegressionScene], backend: GeneratorBackend,
                   engine: RenderEngine,
                   threshold_s: float = REGRESSION_DRIFT_THRESHOLD_S) -> RegressionReport:
    """Regenerate each scene and compare against its blessed baseline.

    A deviation needs both a trace-digest change and a timeline difference
    beyond the threshold; digest-only changes are treated as cosmetic.
    """
    verdicts = []
    for scene in suite:
        if not scene.has_baseline:
            raise MissingBaseline(str(scene.scene_ref))
        digest, timeline = _regenerate_scene(scene.scene_ref, backend, engine)
        detail = ""
        verdict = "match"
        if digest != scene.baseline_trace_digest:
            timeline_detail = _timeline_deviates(scene.baseline_timeline, timeline, threshold_s)
            if timeline_detail is not None:
                verdict = "deviation"
                detail = timeline_detail
        verdicts.append(RegressionVerdict(str(scene.scene_ref), verdict, detail))
    return RegressionReport(tuple(verdicts))
