import json
from pathlib import Path

import pytest

from scenesmith.assembly import write_artifact
from scenesmith.engines import StubEngine
from scenesmith.generation import TemplateBackend, build_plan, draft_tracks
from scenesmith.plan_model import ConceptBrief
from scenesmith.sync import extract_timeline


BRIEF = ConceptBrief(
    topic_title="Projectile Motion",
    audience_level="basic",
    learning_objective="Predict the flight of a launched object from its speed and angle.",
    target_duration_s=360.0,
)


@pytest.fixture(scope="session")
def backend():
    return TemplateBackend()


@pytest.fixture(scope="session")
def engine():
    return StubEngine()


@pytest.fixture(scope="session")
def plan(backend):
    return build_plan(BRIEF, backend, seed=11)


@pytest.fixture(scope="session")
def drafts(plan, backend):
    artifacts, failures = draft_tracks(plan, backend, seed=11)
    assert not failures
    return artifacts


@pytest.fixture
def project_dir(tmp_path, plan, drafts):
    """A drafted project on disk (no validation reports yet)."""
    from scenesmith.plan_model import plan_to_json

    root = tmp_path / "proj"
    root.mkdir()
    (root / "plan.json").write_text(json.dumps(plan_to_json(plan), indent=2, sort_keys=True))
    timelines = root / "timelines"
    timelines.mkdir()
    for scene in plan.scenes:
        tracks = drafts[scene.scene_id]
        for artifact in tracks.values():
            write_artifact(root, artifact)
        t = extract_timeline(tracks["narration"], tracks["code"], scene)
        from scenesmith.sync import timeline_to_json
        (timelines / f"{scene.scene_id}.json").write_text(
            json.dumps(timeline_to_json(t), indent=2, sort_keys=True))
    return root
