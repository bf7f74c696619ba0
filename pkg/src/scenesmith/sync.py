"""Timeline model binding narration cues to visual events.

Cues come from `[[cue:<id> @ <seconds>]]` sentinels in narration text; events
come from `# @event <id> <kind> <start> <duration> [symbols...]` comment
annotations in scene scripts. A cue `cX` and an event `eX` with the same
suffix are bound.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .generation import CUE_SENTINEL_RE, DraftArtifact
from .plan_model import LessonPlan, ScenePlan

DEFAULT_TOLERANCE_S = 0.5

EVENT_KINDS = ("highlight", "transform", "annotate", "add", "remove")

EVENT_ANNOTATION_RE = re.compile(
    r"^#\s*@event\s+(?P<id>\S+)\s+(?P<kind>\S+)\s+(?P<start>-?[0-9.]+)\s+(?P<duration>-?[0-9.]+)(?P<symbols>(?:\s+\S+)*)\s*$"
)


class ParseError(ValueError):
    def __init__(self, track: str, position: int, detail: str):
        super().__init__(f"{track} parse error at line {position}: {detail}")
        self.track = track
        self.position = position


class OrphanBinding(ValueError):
    def __init__(self, binding_id: str):
        super().__init__(f"binding references unknown id {binding_id!r}")
        self.binding_id = binding_id


class RetimeInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class NarrationCue:
    cue_id: str
    scene_id: int
    text: str
    start_s: float
    est_duration_s: float


@dataclass(frozen=True)
class VisualEvent:
    event_id: str
    scene_id: int
    kind: str
    start_s: float
    duration_s: float
    target_symbols: tuple[str, ...] = ()


@dataclass(frozen=True)
class Binding:
    cue_id: str
    event_id: str


@dataclass(frozen=True)
class Timeline:
    scene_id: int
    cues: tuple[NarrationCue, ...]
    events: tuple[VisualEvent, ...]
    bindings: tuple[Binding, ...]
    scene_duration_s: float

    def __post_init__(self):
        cue_ids = {c.cue_id for c in self.cues}
        event_ids = {e.event_id for e in self.events}
        for b in self.bindings:
            if b.cue_id not in cue_ids:
                raise OrphanBinding(b.cue_id)
            if b.event_id not in event_ids:
                raise OrphanBinding(b.event_id)

    def cue(self, cue_id: str) -> NarrationCue:
        return next(c for c in self.cues if c.cue_id == cue_id)

    def event(self, event_id: str) -> VisualEvent:
        return next(e for e in self.events if e.event_id == event_id)


def parse_cues(narration_text: str, scene_id: int, scene_duration_s: float) -> list[NarrationCue]:
    lines = narration_text.splitlines()
    raw: list[tuple[str, float, str]] = []
    for lineno, line in enumerate(lines, start=1):
        if "[[cue:" not in line:
            continue
        m = CUE_SENTINEL_RE.search(line)
        if m is None:
            raise ParseError("narration", lineno, f"malformed cue sentinel in {line!r}")
        text = CUE_SENTINEL_RE.sub("", line).strip()
        raw.append((m.group("id"), float(m.group("start")), text))
    raw.sort(key=lambda item: item[1])
    cues = []
    for i, (cue_id, start, text) in enumerate(raw):
        end = raw[i + 1][1] if i + 1 < len(raw) else scene_duration_s
        cues.append(NarrationCue(cue_id, scene_id, text, start, max(end - start, 0.1)))
    return cues


def parse_events(code_text: str, scene_id: int) -> list[VisualEvent]:
    events = []
    for lineno, line in enumerate(code_text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped.startswith("#") or "@event" not in stripped:
            continue
        m = EVENT_ANNOTATION_RE.match(stripped)
        if m is None:
            raise ParseError("code", lineno, f"malformed event annotation {stripped!r}")
        try:
            start = float(m.group("start"))
            duration = float(m.group("duration"))
        except ValueError:
            raise ParseError("code", lineno, f"bad number in {stripped!r}") from None
        if start < 0 or duration < 0:
            raise ParseError("code", lineno, "start and duration must be non-negative")
        symbols = tuple(m.group("symbols").split())
        events.append(VisualEvent(m.group("id"), scene_id, m.group("kind"), start, duration, symbols))
    return sorted(events, key=lambda e: (e.start_s, e.event_id))


def _bind(cues: Sequence[NarrationCue], events: Sequence[VisualEvent]) -> list[Binding]:
    # cX binds eX by shared suffix: "c2_1" <-> "e2_1".
    event_by_suffix = {e.event_id[1:]: e for e in events if e.event_id[:1] == "e"}
    bindings = []
    for cue in cues:
        event = event_by_suffix.get(cue.cue_id[1:]) if cue.cue_id[:1] == "c" else None
        if event is not None:
            bindings.append(Binding(cue.cue_id, event.event_id))
    return bindings


def extract_timeline(narration: DraftArtifact, code: DraftArtifact, plan_scene: ScenePlan) -> Timeline:
    if narration.scene_id != code.scene_id:
        raise ValueError("narration and code artifacts belong to different scenes")
    cues = parse_cues(narration.content, plan_scene.scene_id, plan_scene.planned_duration_s)
    events = parse_events(code.content, plan_scene.scene_id)
    return Timeline(
        scene_id=plan_scene.scene_id,
        cues=tuple(cues),
        events=tuple(events),
        bindings=tuple(_bind(cues, events)),
        scene_duration_s=plan_scene.planned_duration_s,
    )


@dataclass(frozen=True)
class AlignmentFlag:
    kind: str  # "Drift" | "UnboundCue"
    cue_id: str
    event_id: Optional[str]
    drift_s: Optional[float]


@dataclass(frozen=True)
class AlignmentReport:
    scene_id: int
    flags: tuple[AlignmentFlag, ...]
    tolerance_s: float

    @property
    def passed(self) -> bool:
        return not self.flags


def check_alignment(t: Timeline, tolerance_s: float = DEFAULT_TOLERANCE_S) -> AlignmentReport:
    """Flag bindings whose |cue.start - event.start| exceeds the tolerance
    (inclusive boundary passes) and cues with no binding at all."""
    if tolerance_s <= 0:
        raise ValueError("tolerance_s must be positive")
    flags = []
    bound_cues = {b.cue_id for b in t.bindings}
    for b in t.bindings:
        drift = abs(t.cue(b.cue_id).start_s - t.event(b.event_id).start_s)
        if drift > tolerance_s:
            flags.append(AlignmentFlag("Drift", b.cue_id, b.event_id, round(drift, 6)))
    for cue in t.cues:
        if cue.cue_id not in bound_cues:
            flags.append(AlignmentFlag("UnboundCue", cue.cue_id, None, None))
    return AlignmentReport(t.scene_id, tuple(flags), tolerance_s)


def retime(t: Timeline, strategy: str = "shift_events",
           tolerance_s: float = DEFAULT_TOLERANCE_S) -> Timeline:
    """Resolve drifts by snapping one side of each flagged binding to the other.

    Raises RetimeInfeasible when shifting would overlap events/cues or run past
    the scene duration; that signals regeneration instead.
    """
    if strategy not in ("shift_events", "shift_cues"):
        raise ValueError(f"unknown strategy {strategy!r}")
    report = check_alignment(t, tolerance_s)
    if any(f.kind == "UnboundCue" for f in report.flags):
        raise RetimeInfeasible("unbound cues cannot be retimed; regenerate narration")
    if report.passed:
        return t

    flagged = {(f.cue_id, f.event_id) for f in report.flags}
    cues = list(t.cues)
    events = list(t.events)
    for binding in t.bindings:
        if (binding.cue_id, binding.event_id) not in flagged:
            continue
        cue = t.cue(binding.cue_id)
        event = t.event(binding.event_id)
        if strategy == "shift_events":
            events = [replace(e, start_s=cue.start_s) if e.event_id == event.event_id else e
                      for e in events]
        else:
            cues = [replace(c, start_s=event.start_s) if c.cue_id == cue.cue_id else c
                    for c in cues]

    cues.sort(key=lambda c: c.start_s)
    for a, b in zip(cues, cues[1:]):
        if a.start_s + a.est_duration_s > b.start_s + 1e-9 or a.start_s == b.start_s:
            raise RetimeInfeasible(f"cues {a.cue_id} and {b.cue_id} would overlap")
    starts = sorted((e.start_s, e.event_id) for e in events)
    for (s1, id1), (s2, id2) in zip(starts, starts[1:]):
        if abs(s1 - s2) < 1e-9:
            raise RetimeInfeasible(f"events {id1} and {id2} would collide at {s1} s")
    latest = max([c.start_s + c.est_duration_s for c in cues] +
                 [e.start_s + e.duration_s for e in events], default=0.0)
    if latest > t.scene_duration_s + 1e-9:
        raise RetimeInfeasible("shift would run past the scene duration")

    result = Timeline(t.scene_id, tuple(cues), tuple(events), t.bindings, t.scene_duration_s)
    if not check_alignment(result, tolerance_s).passed:
        raise RetimeInfeasible("retime did not converge")
    return result


@dataclass(frozen=True)
class SegmentationFlag:
    kind: str  # "SceneTooShort" | "SceneTooLong" | "TotalDurationDrift"
    scene_id: Optional[int]
    detail: str


@dataclass(frozen=True)
class SegmentationReport:
    flags: tuple[SegmentationFlag, ...]

    @property
    def passed(self) -> bool:
        return not self.flags


def check_segmentation(timelines: Sequence[Timeline], plan: LessonPlan,
                       scene_min_s: float = 60.0, scene_max_s: float = 120.0,
                       total_tolerance: float = 0.20) -> SegmentationReport:
    flags = []
    for t in timelines:
        if t.scene_duration_s < scene_min_s:
            flags.append(SegmentationFlag("SceneTooShort", t.scene_id,
                                          f"{t.scene_duration_s} s < {scene_min_s} s"))
        elif t.scene_duration_s > scene_max_s:
            flags.append(SegmentationFlag("SceneTooLong", t.scene_id,
                                          f"{t.scene_duration_s} s > {scene_max_s} s"))
    total = sum(t.scene_duration_s for t in timelines)
    target = plan.brief.target_duration_s
    if not (target * (1 - total_tolerance) <= total <= target * (1 + total_tolerance)):
        flags.append(SegmentationFlag("TotalDurationDrift", None,
                                      f"total {total:.1f} s outside +/-{total_tolerance:.0%} of {target:.1f} s"))
    return SegmentationReport(tuple(flags))


# --- timeline JSON (timelines/<scene>.json) ----------------------------------

def timeline_to_json(t: Timeline) -> dict:
    return {
        "scene_id": t.scene_id,
        "scene_duration_s": t.scene_duration_s,
        "cues": [{"cue_id": c.cue_id, "scene_id": c.scene_id, "text": c.text,
                  "start_s": c.start_s, "est_duration_s": c.est_duration_s} for c in t.cues],
        "events": [{"event_id": e.event_id, "scene_id": e.scene_id, "kind": e.kind,
                    "start_s": e.start_s, "duration_s": e.duration_s,
                    "target_symbols": list(e.target_symbols)} for e in t.events],
        "bindings": [{"cue_id": b.cue_id, "event_id": b.event_id} for b in t.bindings],
    }


def timeline_from_json(data: dict) -> Timeline:
    return Timeline(
        scene_id=data["scene_id"],
        cues=tuple(NarrationCue(c["cue_id"], c["scene_id"], c["text"],
                                c["start_s"], c["est_duration_s"]) for c in data["cues"]),
        events=tuple(VisualEvent(e["event_id"], e["scene_id"], e["kind"], e["start_s"],
                                 e["duration_s"], tuple(e["target_symbols"])) for e in data["events"]),
        bindings=tuple(Binding(b["cue_id"], b["event_id"]) for b in data["bindings"]),
        scene_duration_s=data["scene_duration_s"],
    )
