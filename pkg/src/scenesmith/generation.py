"""Generator backends and the parallel narration/code drafting workflow.

The template backend is fully deterministic: given the same template, slot
values and seed it returns byte-identical text, so the whole pipeline can be
tested offline. The remote backend is a generic HTTP chat-completion client.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .plan_model import (
    CodeConstraints,
    ConceptBrief,
    DuplicateSymbol,
    LessonPlan,
    PlanDefect,
    ScenePlan,
    SymbolEntry,
    ledger_register,
    validate_plan,
)

NARRATION = "narration"
CODE = "code"
TRACKS = (NARRATION, CODE)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_PRIMITIVES = ("highlight", "transform", "annotate", "add", "remove")

CUE_SENTINEL_RE = re.compile(r"\[\[cue:(?P<id>[A-Za-z0-9_]+) @ (?P<start>[0-9]+(?:\.[0-9]+)?)\]\]")


class MissingSlot(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.slot = name


class BackendFailure(RuntimeError):
    def __init__(self, message: str, scene_id: Optional[int] = None, track: Optional[str] = None):
        super().__init__(message)
        self.scene_id = scene_id
        self.track = track


class PlanRejected(RuntimeError):
    def __init__(self, defects: Sequence):
        super().__init__(f"plan rejected after retries: {list(defects)}")
        self.defects = list(defects)


class MaxAttemptsExceeded(RuntimeError):
    def __init__(self, scene_id: int, track: str, attempts: int):
        super().__init__(f"scene {scene_id} {track}: {attempts} attempts exhausted, escalating to review")
        self.scene_id = scene_id
        self.track = track
        self.attempts = attempts


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    version: str
    slots: tuple[str, ...]
    body: str
    temperature: float = 0.2
    max_output_tokens: int = 2048

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 1.0):
            raise ValueError("temperature must be in [0, 1]")
        placeholders = set(re.findall(r"\{(\w+)\}", self.body))
        missing = placeholders - set(self.slots)
        if missing:
            raise ValueError(f"template {self.template_id}: placeholders {sorted(missing)} not declared as slots")
        if self.template_id.startswith("code") and self.temperature > 0.3:
            raise ValueError(f"code template {self.template_id}: temperature {self.temperature} > 0.3")


def render_prompt(template: PromptTemplate, slot_values: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution; inserted values are literal."""
    def _sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in slot_values:
            raise MissingSlot(name)
        return str(slot_values[name])

    return re.sub(r"\{(\w+)\}", _sub, template.body)


@dataclass(frozen=True)
class GenerationRequest:
    scene_id: int
    track: str
    template: PromptTemplate
    slot_values: Mapping[str, str]
    seed: int
    attempt: int = 1

    def __post_init__(self):
        if self.attempt < 1:
            raise ValueError("attempt must be >= 1")
        missing = set(self.template.slots) - set(self.slot_values)
        if missing:
            raise MissingSlot(sorted(missing)[0])


@dataclass(frozen=True)
class Provenance:
    backend_id: str
    model_id: str
    template_id: str
    template_version: str
    seed: int
    attempt: int


@dataclass(frozen=True)
class DraftArtifact:
    scene_id: int
    track: str
    content: str
    version: int
    provenance: Provenance


class GeneratorBackend:
    """Interface for text generators. Implementations must be safe for
    concurrent calls or declare max_parallelism = 1."""

    backend_id: str = "abstract"
    model_id: str = ""
    capabilities: frozenset = frozenset({"plan", NARRATION, CODE})
    max_parallelism: int = 8

    def complete(self, template: PromptTemplate, slot_values: Mapping[str, str], seed: int) -> str:
        raise NotImplementedError


# --- built-in prompt templates ----------------------------------------------

PLAN_TEMPLATE = PromptTemplate(
    template_id="plan.default",
    version="1",
    slots=("topic", "audience", "objective", "n_scenes"),
    body=("Plan a {n_scenes}-scene lesson on {topic} for a {audience} audience.\n"
          "Objective: {objective}\n"
          "Return scene goals, goal keywords, storyboard frames and a symbol list."),
    temperature=0.2,
)

NARRATION_TEMPLATE = PromptTemplate(
    template_id="narration.default",
    version="1",
    slots=("scene_id", "goal", "keywords", "cues", "symbols", "duration", "repair_context"),
    body=("Write narration for scene {scene_id} ({duration} s).\nGoal: {goal}\n"
          "Keywords: {keywords}\nCues: {cues}\nSymbols: {symbols}\n"
          "Repair context: {repair_context}"),
    temperature=0.3,
)

CODE_TEMPLATE = PromptTemplate(
    template_id="code.default",
    version="1",
    slots=("scene_id", "goal", "keywords", "cues", "symbols", "primitives", "duration", "repair_context"),
    body=("Write a scene script for scene {scene_id} ({duration} s).\nGoal: {goal}\n"
          "Keywords: {keywords}\nCues: {cues}\nSymbols: {symbols}\n"
          "Allowed primitives: {primitives}\nRepair context: {repair_context}"),
    temperature=0.1,
)

TEMPLATES = {t.template_id: t for t in (PLAN_TEMPLATE, NARRATION_TEMPLATE, CODE_TEMPLATE)}


# --- template backend --------------------------------------------------------

_TOPIC_BOOK = {
    "linear transformations": {
        "aspects": ["mapping", "basis", "grid", "composition", "determinant", "inverse", "projection"],
        "symbols": [("A", "transformation matrix", "1"),
                    ("v", "input vector", "1"),
                    ("detA", "area scaling factor", "1")],
    },
    "eigenvalues": {
        "aspects": ["scaling", "eigenvector", "direction", "spectrum", "diagonalization", "stability", "powers"],
        "symbols": [("A", "square matrix", "1"),
                    ("lam", "eigenvalue", "1"),
                    ("v", "eigenvector", "1")],
    },
    "projectile motion": {
        "aspects": ["launch", "velocity", "gravity", "apex", "range", "trajectory", "impact"],
        "symbols": [("v", "launch speed", "m/s"),
                    ("g", "gravitational acceleration", "m/s^2"),
                    ("t", "flight time", "s"),
                    ("h", "height above ground", "m")],
    },
}

_GENERIC_ASPECTS = ["definition", "intuition", "example", "contrast", "application", "pitfalls", "summary"]


def _topic_book(topic: str) -> dict:
    key = topic.strip().lower()
    if key in _TOPIC_BOOK:
        return _TOPIC_BOOK[key]
    stem = re.sub(r"[^a-z0-9]+", "_", key) or "x"
    return {
        "aspects": _GENERIC_ASPECTS,
        "symbols": [(stem[:8], f"quantity central to {topic}", "1")],
    }


class TemplateBackend(GeneratorBackend):
    """Offline deterministic backend with canned, topic-keyed outputs."""

    backend_id = "template"
    model_id = "canned-v1"

    def complete(self, template: PromptTemplate, slot_values: Mapping[str, str], seed: int) -> str:
        if template.template_id.startswith("plan"):
            return self._plan_payload(slot_values, seed)
        if template.template_id.startswith("narration"):
            return self._narration(slot_values)
        if template.template_id.startswith("code"):
            return self._code(slot_values)
        raise BackendFailure(f"template backend cannot serve {template.template_id}")

    def _plan_payload(self, slots: Mapping[str, str], seed: int) -> str:
        topic = slots["topic"]
        n_scenes = int(slots["n_scenes"])
        book = _topic_book(topic)
        aspects = book["aspects"]
        symbols = book["symbols"]
        scenes = []
        for i in range(n_scenes):
            aspect = aspects[i % len(aspects)]
            symbol = symbols[i % len(symbols)][0]
            scenes.append({
                "goal": f"Show how {aspect} works in {topic} using the symbol {symbol}",
                "keywords": [aspect, symbol],
                "storyboard": [
                    f"Frame 1: title card introducing {aspect}",
                    f"Frame 2: {symbol} highlighted while the {aspect} step plays",
                    f"Frame 3: recap of the {aspect} takeaway",
                ],
            })
        payload = {
            "scenes": scenes,
            "symbols": [
                {"name": n, "meaning": m, "unit": u, "assumptions": []}
                for n, m, u in symbols
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def _parse_cues(self, slots: Mapping[str, str]) -> list[tuple[str, float]]:
        # cues slot format: "id@start,id@start,..."
        cues = []
        for part in slots["cues"].split(","):
            cue_id, start = part.split("@")
            cues.append((cue_id, float(start)))
        return cues

    def _narration(self, slots: Mapping[str, str]) -> str:
        cues = self._parse_cues(slots)
        keywords = [k for k in slots["keywords"].split(",") if k]
        symbols = [s for s in slots["symbols"].split(",") if s]
        goal = slots["goal"]
        scene_id = slots["scene_id"]
        lines = []
        for i, (cue_id, start) in enumerate(cues):
            sentinel = f"[[cue:{cue_id} @ {start:.1f}]]"
            if i == 0:
                kw = " and ".join(keywords)
                lines.append(f"{sentinel} In scene {scene_id} we look at {kw}. {goal}.")
            elif i == 1 and symbols:
                sym = symbols[(i - 1) % len(symbols)]
                lines.append(f"{sentinel} Keep an eye on ${sym}$ as the picture changes step by step.")
            else:
                sym = symbols[(i - 1) % len(symbols)] if symbols else keywords[-1]
                lines.append(f"{sentinel} Notice how ${sym}$ ties back to {keywords[0]}; this is the key step.")
        repair = slots.get("repair_context", "")
        if repair:
            lines.append(f"(revised after: {repair})")
        return "\n".join(lines) + "\n"

    def _code(self, slots: Mapping[str, str]) -> str:
        cues = self._parse_cues(slots)
        keywords = [k for k in slots["keywords"].split(",") if k]
        symbols = [s for s in slots["symbols"].split(",") if s]
        duration = float(slots["duration"])
        scene_id = slots["scene_id"]
        primitives = [p for p in slots["primitives"].split(",") if p]

        # One event per cue, aligned to the cue start. The first event is a
        # highlight of a keyword symbol so the key step is signaled.
        target0 = next((s for s in symbols if s in keywords), symbols[0] if symbols else keywords[0])
        events = []
        for i, (cue_id, start) in enumerate(cues):
            event_id = "e" + cue_id[1:]
            nxt = cues[i + 1][1] if i + 1 < len(cues) else duration
            ev_duration = round(min(max(nxt - start, 1.0) * 0.8, 6.0), 2)
            if i == 0:
                kind, target = "highlight", target0
            else:
                cycle = [p for p in primitives if p != "remove"] or primitives
                kind = cycle[i % len(cycle)]
                target = symbols[i % len(symbols)] if symbols else target0
            events.append((event_id, kind, start, ev_duration, target))

        body_lines = [
            "from manim import Scene",
            "import numpy as np",
            "",
            "",
            f"class GeneratedScene{scene_id}(Scene):",
            "    def construct(self):",
        ]
        for event_id, kind, start, ev_duration, target in events:
            body_lines.append(
                f"        self.note_event({event_id!r}, {kind!r}, {start:.2f}, {ev_duration:.2f}, [{target!r}])"
            )
        body_lines.append("")
        for event_id, kind, start, ev_duration, target in events:
            body_lines.append(f"# @event {event_id} {kind} {start:.2f} {ev_duration:.2f} {target}")
        repair = slots.get("repair_context", "")
        if repair:
            body_lines.append(f"# revised after: {repair}")
        return "\n".join(body_lines) + "\n"


class RemoteBackend(GeneratorBackend):
    """Generic HTTP chat-completion client; retries with exponential backoff."""

    backend_id = "remote"

    def __init__(self, endpoint: str, model_id: str, auth_token: Optional[str] = None,
                 retries: int = 3, backoff_s: float = 1.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self.auth_token = auth_token
        self.retries = retries
        self.backoff_s = backoff_s

    def complete(self, template: PromptTemplate, slot_values: Mapping[str, str], seed: int) -> str:
        import httpx

        prompt = render_prompt(template, slot_values)
        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": template.temperature,
            "seed": seed,
        }
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                response = httpx.post(self.endpoint, json=payload, headers=headers, timeout=60.0)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - backoff over any transport error
                last_error = exc
                time.sleep(self.backoff_s * (2 ** attempt))
        raise BackendFailure(f"remote backend failed after {self.retries} tries: {last_error}")


# --- planning ----------------------------------------------------------------

def scene_count_for(target_duration_s: float) -> int:
    return max(2, round(target_duration_s / 90))


def _scene_durations(target: float, n: int) -> list[float]:
    base = min(max(target / n, 60.0), 120.0)
    return [round(base, 1)] * n


def build_plan(brief: ConceptBrief, backend: GeneratorBackend, seed: int = 0,
               max_attempts: int = DEFAULT_MAX_ATTEMPTS, cues_per_scene: int = 3) -> LessonPlan:
    """Build a LessonPlan that passes validate_plan, or raise PlanRejected."""
    n_scenes = scene_count_for(brief.target_duration_s)
    durations = _scene_durations(brief.target_duration_s, n_scenes)
    last_defects: list[PlanDefect] = []
    for attempt in range(1, max_attempts + 1):
        raw = backend.complete(PLAN_TEMPLATE, {
            "topic": brief.topic_title,
            "audience": brief.audience_level,
            "objective": brief.learning_objective,
            "n_scenes": str(n_scenes),
        }, seed + attempt - 1)
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            last_defects = [PlanDefect("UnparseablePlan", None, str(exc))]
            continue

        try:
            ledger: tuple[SymbolEntry, ...] = ()
            for sym in payload["symbols"]:
                entry = SymbolEntry.make(sym["name"], sym["meaning"], sym["unit"],
                                         sym.get("assumptions", ()))
                ledger = ledger_register(ledger, entry)
        except DuplicateSymbol as exc:
            last_defects = [PlanDefect("DuplicateSymbol", None, str(exc))]
            continue

        scenes = []
        for i, scene_payload in enumerate(payload["scenes"][:n_scenes], start=1):
            cue_ids = tuple(f"c{i}_{k}" for k in range(1, cues_per_scene + 1))
            scenes.append(ScenePlan(
                scene_id=i,
                goal=scene_payload["goal"],
                goal_keywords=tuple(scene_payload["keywords"]),
                narration_cues=cue_ids,
                storyboard=tuple(scene_payload["storyboard"]),
                code_constraints=CodeConstraints(
                    allowed_primitives=DEFAULT_PRIMITIVES,
                    layout_hints=("title_top", "figure_center"),
                    timing_marks=tuple(round(k * durations[i - 1] / cues_per_scene, 2)
                                       for k in range(cues_per_scene)),
                ),
                planned_duration_s=durations[i - 1],
            ))

        plan = LessonPlan(brief=brief, scenes=tuple(scenes), ledger=ledger,
                          plan_version="1", seed=seed)
        defects = validate_plan(plan)
        if not defects:
            return plan
        last_defects = defects
    raise PlanRejected(last_defects)


# --- drafting ----------------------------------------------------------------

def cue_schedule(scene: ScenePlan) -> list[tuple[str, float]]:
    """Evenly spaced cue start times over the planned scene duration."""
    n = len(scene.narration_cues)
    return [(cue_id, round(k * scene.planned_duration_s / n, 2))
            for k, cue_id in enumerate(scene.narration_cues)]


def _slot_values_for(plan: LessonPlan, scene: ScenePlan, track: str, repair_context: str = "") -> dict[str, str]:
    cues = ",".join(f"{cid}@{start}" for cid, start in cue_schedule(scene))
    slots = {
        "scene_id": str(scene.scene_id),
        "goal": scene.goal,
        "keywords": ",".join(scene.goal_keywords),
        "cues": cues,
        "symbols": ",".join(e.name for e in plan.ledger),
        "duration": str(scene.planned_duration_s),
        "repair_context": repair_context,
    }
    if track == CODE:
        slots["primitives"] = ",".join(scene.code_constraints.allowed_primitives)
    return slots


def _generate_one(plan: LessonPlan, scene: ScenePlan, track: str, backend: GeneratorBackend,
                  seed: int, version: int, attempt: int, repair_context: str = "") -> DraftArtifact:
    template = NARRATION_TEMPLATE if track == NARRATION else CODE_TEMPLATE
    slots = _slot_values_for(plan, scene, track, repair_context)
    request = GenerationRequest(scene.scene_id, track, template, slots, seed, attempt)
    try:
        content = backend.complete(request.template, request.slot_values, request.seed)
    except BackendFailure as exc:
        raise BackendFailure(str(exc), scene.scene_id, track) from exc
    return DraftArtifact(
        scene_id=scene.scene_id,
        track=track,
        content=content,
        version=version,
        provenance=Provenance(
            backend_id=backend.backend_id,
            model_id=backend.model_id,
            template_id=template.template_id,
            template_version=template.version,
            seed=seed,
            attempt=attempt,
        ),
    )


def draft_scene(plan: LessonPlan, scene: ScenePlan, backend: GeneratorBackend,
                seed: int = 0) -> dict[str, DraftArtifact]:
    """Draft both tracks for a single scene (used by the regression harness)."""
    return {track: _generate_one(plan, scene, track, backend, seed, version=1, attempt=1)
            for track in sorted(TRACKS)}


def draft_tracks(plan: LessonPlan, backend: GeneratorBackend, seed: int = 0):
    """Draft narration and code for every scene in parallel.

    Returns (artifacts, failures): artifacts maps scene_id -> {track: artifact}
    in deterministic (scene_id, track) order; failures is a list of
    BackendFailure for (scene, track) pairs that could not be drafted.
    """
    jobs = [(scene, track) for scene in plan.scenes for track in TRACKS]
    results: dict[tuple[int, str], DraftArtifact] = {}
    failures: list[BackendFailure] = []

    def _run(job):
        scene, track = job
        return _generate_one(plan, scene, track, backend, seed, version=1, attempt=1)

    workers = max(1, backend.max_parallelism)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for job, outcome in zip(jobs, pool.map(lambda j: _safe(_run, j), jobs)):
            if isinstance(outcome, BackendFailure):
                failures.append(outcome)
            else:
                results[(job[0].scene_id, job[1])] = outcome

    artifacts: dict[int, dict[str, DraftArtifact]] = {}
    for scene in plan.scenes:
        per_scene = {}
        for track in sorted(TRACKS):
            artifact = results.get((scene.scene_id, track))
            if artifact is not None:
                per_scene[track] = artifact
        if per_scene:
            artifacts[scene.scene_id] = per_scene
    return artifacts, failures


def _safe(fn, job):
    try:
        return fn(job)
    except BackendFailure as exc:
        return exc


def regenerate_part(plan: LessonPlan, artifacts: Mapping[int, Mapping[str, DraftArtifact]],
                    scene_id: int, track: str, reason: str, backend: GeneratorBackend,
                    max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> DraftArtifact:
    """Regenerate one (scene, track); the sibling track is untouched."""
    prior = artifacts[scene_id][track]
    attempt = prior.provenance.attempt + 1
    if attempt > max_attempts:
        raise MaxAttemptsExceeded(scene_id, track, attempt)
    scene = next(s for s in plan.scenes if s.scene_id == scene_id)
    return _generate_one(plan, scene, track, backend, prior.provenance.seed,
                         version=prior.version + 1, attempt=attempt, repair_context=reason)
