"""Human-in-the-loop review workflow: three-pass criteria, the scene state
machine, and the journaled project store backing the HTTP API.

Every mutation is appended to a JSON-lines journal per project; replaying the
journal from disk reproduces the exact store state.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

CRITERIA = ("subject_matter", "teaching_quality", "engineering")
VERDICTS = ("pending", "pass", "fail")

STATES = ("draft", "validated", "in_review", "changes_requested", "approved", "rendered")

_TRANSITIONS = {
    ("draft", "validated"),
    ("validated", "in_review"),
    ("in_review", "approved"),
    ("in_review", "changes_requested"),
    ("changes_requested", "changes_requested"),
    ("changes_requested", "draft"),
    ("approved", "rendered"),
    # artifact mutation after approval resets to draft (immutability guard)
    ("approved", "draft"),
}


class IllegalTransition(RuntimeError):
    def __init__(self, current: str, target: str):
        super().__init__(f"illegal scene state transition {current} -> {target}")
        self.current = current
        self.target = target


class MissingNote(ValueError):
    pass


class VersionConflict(RuntimeError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"version conflict: expected {expected}, store has {actual}")
        self.expected = expected
        self.actual = actual


class StoreCorrupt(RuntimeError):
    def __init__(self, position: int, detail: str):
        super().__init__(f"journal corrupt at entry {position}: {detail}")
        self.position = position


class UnknownScene(KeyError):
    pass


@dataclass
class ReviewRecord:
    scene_id: int
    criteria: dict = field(default_factory=lambda: {c: "pending" for c in CRITERIA})
    reviewer_note: str = ""
    decided_at: Optional[str] = None

    @property
    def approved(self) -> bool:
        return all(v == "pass" for v in self.criteria.values())


@dataclass
class SceneRecord:
    scene_id: int
    state: str = "draft"
    version: int = 0
    review: ReviewRecord = None  # type: ignore[assignment]
    artifact_versions: dict = field(default_factory=lambda: {"narration": 1, "code": 1})

    def __post_init__(self):
        if self.review is None:
            self.review = ReviewRecord(self.scene_id)


def _check_transition(current: str, target: str) -> None:
    if (current, target) not in _TRANSITIONS:
        raise IllegalTransition(current, target)


class ProjectStore:
    """Journaled store of per-project scene states and review records.

    All mutations to one project are serialized under a single lock; reads
    return snapshots. Writers pass the scene version they saw; a mismatch is a
    VersionConflict (optimistic concurrency).
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._projects: dict[str, dict[int, SceneRecord]] = {}
        self._load_all()

    # -- journal ---------------------------------------------------------

    def _journal_path(self, project_id: str) -> Path:
        return self.root / project_id / "review" / "journal.jsonl"

    def _load_all(self) -> None:
        for journal in sorted(self.root.glob("*/review/journal.jsonl")):
            project_id = journal.parent.parent.name
            self._projects[project_id] = {}
            for position, line in enumerate(journal.read_text().splitlines()):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                    self._apply(project_id, event)
                except (json.JSONDecodeError, KeyError, IllegalTransition) as exc:
                    raise StoreCorrupt(position, str(exc)) from exc

    def _append(self, project_id: str, event: dict) -> None:
        path = self._journal_path(project_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _apply(self, project_id: str, event: dict) -> None:
        scenes = self._projects.setdefault(project_id, {})
        scene_id = event["scene_id"]
        record = scenes.setdefault(scene_id, SceneRecord(scene_id))
        kind = event["kind"]
        if kind == "state":
            record.state = event["state"]
        elif kind == "verdict":
            record.review.criteria[event["criterion"]] = event["verdict"]
            if event.get("note"):
                record.review.reviewer_note = event["note"]
            record.review.decided_at = event.get("at")
        elif kind == "artifact":
            record.artifact_versions[event["track"]] = event["version"]
        else:
            raise KeyError(f"unknown journal event kind {kind!r}")
        record.version += 1

    def _emit(self, project_id: str, event: dict) -> None:
        self._append(project_id, event)
        self._apply(project_id, event)

    # -- queries -----------------------------------------------------------

    def projects(self) -> list[str]:
        with self._lock:
            return sorted(self._projects)

    def scenes(self, project_id: str) -> list[SceneRecord]:
        with self._lock:
            return [self._copy(r) for _, r in sorted(self._projects.get(project_id, {}).items())]

    def scene(self, project_id: str, scene_id: int) -> SceneRecord:
        with self._lock:
            return self._copy(self._get(project_id, scene_id))

    def _get(self, project_id: str, scene_id: int) -> SceneRecord:
        try:
            return self._projects[project_id][scene_id]
        except KeyError:
            raise UnknownScene(f"{project_id}/{scene_id}") from None

    @staticmethod
    def _copy(record: SceneRecord) -> SceneRecord:
        return SceneRecord(
            scene_id=record.scene_id,
            state=record.state,
            version=record.version,
            review=ReviewRecord(record.scene_id, dict(record.review.criteria),
                                record.review.reviewer_note, record.review.decided_at),
            artifact_versions=dict(record.artifact_versions),
        )

    # -- mutations ----------------------------------------------------------

    def register_scene(self, project_id: str, scene_id: int) -> None:
        with self._lock:
            scenes = self._projects.setdefault(project_id, {})
            if scene_id not in scenes:
                scenes[scene_id] = SceneRecord(scene_id)
                # registration itself is not journaled; a scene exists once any
                # event references it, so emit an initial state event
                self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "draft"})

    def _check_version(self, record: SceneRecord, expected: Optional[int]) -> None:
        if expected is not None and expected != record.version:
            raise VersionConflict(expected, record.version)

    def mark_validated(self, project_id: str, scene_id: int,
                       expected_version: Optional[int] = None) -> SceneRecord:
        """draft -> validated, on a merge routing decision."""
        with self._lock:
            record = self._get(project_id, scene_id)
            self._check_version(record, expected_version)
            _check_transition(record.state, "validated")
            self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "validated"})
            return self._copy(record)

    def submit_for_review(self, project_id: str, scene_id: int,
                          expected_version: Optional[int] = None) -> SceneRecord:
        with self._lock:
            record = self._get(project_id, scene_id)
            self._check_version(record, expected_version)
            _check_transition(record.state, "in_review")
            self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "in_review"})
            return self._copy(record)

    def record_verdict(self, project_id: str, scene_id: int, criterion: str, verdict: str,
                       note: str = "", expected_version: Optional[int] = None) -> SceneRecord:
        if criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {criterion!r}")
        if verdict not in ("pass", "fail"):
            raise ValueError(f"verdict must be pass or fail, got {verdict!r}")
        if verdict == "fail" and not note.strip():
            raise MissingNote(f"fail verdict on {criterion} requires a reviewer note")
        with self._lock:
            record = self._get(project_id, scene_id)
            self._check_version(record, expected_version)
            if record.state != "in_review":
                raise IllegalTransition(record.state, "in_review(verdict)")
            self._emit(project_id, {
                "kind": "verdict", "scene_id": scene_id, "criterion": criterion,
                "verdict": verdict, "note": note,
                "at": datetime.now(timezone.utc).isoformat(),
            })
            if record.review.approved:
                self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "approved"})
            return self._copy(record)

    def request_regeneration(self, project_id: str, scene_id: int, track: str, note: str,
                             expected_version: Optional[int] = None) -> SceneRecord:
        if not note.strip():
            raise MissingNote("regeneration request requires a note")
        with self._lock:
            record = self._get(project_id, scene_id)
            self._check_version(record, expected_version)
            if record.state not in ("in_review", "changes_requested"):
                raise IllegalTransition(record.state, "changes_requested")
            self._emit(project_id, {"kind": "state", "scene_id": scene_id,
                                    "state": "changes_requested"})
            return self._copy(record)

    def notify_artifact(self, project_id: str, scene_id: int, track: str,
                        version: int) -> SceneRecord:
        """A regenerated (or mutated) artifact arrived; scene returns to draft."""
        with self._lock:
            record = self._get(project_id, scene_id)
            self._emit(project_id, {"kind": "artifact", "scene_id": scene_id,
                                    "track": track, "version": version})
            if record.state in ("changes_requested", "approved"):
                self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "draft"})
            return self._copy(record)

    def mark_rendered(self, project_id: str, scene_id: int,
                      expected_version: Optional[int] = None) -> SceneRecord:
        with self._lock:
            record = self._get(project_id, scene_id)
            self._check_version(record, expected_version)
            _check_transition(record.state, "rendered")
            if not record.review.approved:
                raise IllegalTransition(record.state, "rendered")
            self._emit(project_id, {"kind": "state", "scene_id": scene_id, "state": "rendered"})
            return self._copy(record)
