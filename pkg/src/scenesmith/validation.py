"""Pre-render check chain: run check, cue/event alignment, symbol/unit
consistency and goal coverage, plus the routing decision (merge, regenerate a
part, or escalate to review).
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engines import DryRunError, RenderEngine, Timeout
from .generation import CODE, CUE_SENTINEL_RE, NARRATION, DraftArtifact
from .plan_model import (
    Dimension,
    ScenePlan,
    SymbolEntry,
    SymbolUsage,
    UnitError,
    ledger_check_usage,
    parse_unit,
)
from .sync import RetimeInfeasible, Timeline, check_alignment, retime

CHECKS = ("run", "alignment", "symbol_unit", "goal_coverage")
EITHER = "either"

DEFAULT_STUB_BUDGET_S = 5.0
DEFAULT_RUN_BUDGET_S = 120.0

MATH_SPAN_RE = re.compile(r"\$([^$]*)\$")


@dataclass(frozen=True)
class ValidationFinding:
    check: str
    scene_id: int
    track_hint: str  # narration | code | either
    severity: str  # error | warning
    message: str
    code: str = ""
    locus: Optional[str] = None

    def __post_init__(self):
        if self.severity == "error" and self.track_hint not in (NARRATION, CODE, EITHER):
            raise ValueError("error findings must carry a track hint")


@dataclass(frozen=True)
class ValidationReport:
    scene_id: int
    findings: tuple[ValidationFinding, ...]
    passed: bool
    checked_versions: dict

    @staticmethod
    def build(scene_id: int, findings: Sequence[ValidationFinding],
              narration_version: int, code_version: int) -> "ValidationReport":
        ordered = tuple(sorted(findings, key=lambda f: (f.check, f.severity, f.code, f.message)))
        return ValidationReport(
            scene_id=scene_id,
            findings=ordered,
            passed=not any(f.severity == "error" for f in ordered),
            checked_versions={"narration": narration_version, "code": code_version},
        )


def split_symbol_token(token: str) -> tuple[str, Optional[str]]:
    """Event symbol tokens may carry a unit context: `v:m/s` -> ("v", "m/s")."""
    if ":" in token:
        name, unit = token.split(":", 1)
        return name, unit
    return token, None


# --- run check ----------------------------------------------------------------

def run_check(code: DraftArtifact, engine: RenderEngine,
              budget_s: float = DEFAULT_STUB_BUDGET_S,
              import_whitelist: Optional[frozenset] = None) -> list[ValidationFinding]:
    """Import whitelist, LaTeX sanity and a double seeded dry run."""
    scene_id = code.scene_id
    findings: list[ValidationFinding] = []
    whitelist = import_whitelist if import_whitelist is not None else getattr(
        engine, "import_whitelist", frozenset({"manim", "numpy", "math", "random"}))

    try:
        tree = ast.parse(code.content)
    except SyntaxError as exc:
        return [ValidationFinding("run", scene_id, CODE, "error",
                                  f"script does not parse: {exc}", code="SyntaxError",
                                  locus=f"line {exc.lineno}")]

    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [alias.name.split(".")[0] for alias in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [(node.module or "").split(".")[0]]
        else:
            continue
        for name in names:
            if name and name not in whitelist:
                findings.append(ValidationFinding(
                    "run", scene_id, CODE, "error",
                    f"import of {name!r} is not on the whitelist", code="ForbiddenImport",
                    locus=f"line {node.lineno}"))

    spans = MATH_SPAN_RE.findall(code.content)
    if code.content.count("$") % 2 != 0:
        findings.append(ValidationFinding("run", scene_id, CODE, "error",
                                          "unbalanced math delimiters", code="UnbalancedMath"))
    for span in spans:
        if not engine.check_math(span):
            findings.append(ValidationFinding("run", scene_id, CODE, "error",
                                              f"math fragment does not check: ${span}$",
                                              code="BadLatex"))

    if any(f.code == "ForbiddenImport" for f in findings):
        return findings  # the dry run would fail on the same imports

    seed = code.provenance.seed
    try:
        first = engine.dry_run(code.content, seed, budget_s)
        second = engine.dry_run(code.content, seed, budget_s)
    except DryRunError as exc:
        findings.append(ValidationFinding("run", scene_id, CODE, "error",
                                          f"dry run failed: {exc}", code="RunFailure"))
        return findings
    except Timeout:
        raise
    if first != second:
        findings.append(ValidationFinding("run", scene_id, CODE, "error",
                                          "event trace differs across two seeded runs",
                                          code="NondeterministicRun"))
    return findings


# --- alignment check ------------------------------------------------------------

def alignment_check(t: Timeline, tolerance_s: float = 0.5) -> list[ValidationFinding]:
    """Drifts repairable by retime are warnings; unbound cues are errors."""
    report = check_alignment(t, tolerance_s)
    if report.passed:
        return []
    findings = []
    drift_flags = [f for f in report.flags if f.kind == "Drift"]
    unbound = [f for f in report.flags if f.kind == "UnboundCue"]
    for flag in unbound:
        findings.append(ValidationFinding("alignment", t.scene_id, NARRATION, "error",
                                          f"cue {flag.cue_id} has no bound visual event",
                                          code="UnboundCue"))
    if drift_flags:
        repairable = not unbound
        if repairable:
            try:
                retime(t, "shift_events", tolerance_s)
            except RetimeInfeasible:
                repairable = False
        for flag in drift_flags:
            if repairable:
                findings.append(ValidationFinding(
                    "alignment", t.scene_id, CODE, "warning",
                    f"binding {flag.cue_id}->{flag.event_id} drifts {flag.drift_s} s (retimable)",
                    code="DriftRepairable"))
            else:
                findings.append(ValidationFinding(
                    "alignment", t.scene_id, CODE, "error",
                    f"binding {flag.cue_id}->{flag.event_id} drifts {flag.drift_s} s and cannot be retimed",
                    code="DriftUnrepairable"))
    return findings


# --- symbol/unit check -----------------------------------------------------------

def extract_usages(ledger: Sequence[SymbolEntry], narration: DraftArtifact,
                   t: Timeline) -> list[SymbolUsage]:
    usages = []
    text = CUE_SENTINEL_RE.sub("", narration.content)
    for mention in MATH_SPAN_RE.findall(text):
        name = mention.strip()
        if name:
            usages.append(SymbolUsage(name, narration.scene_id, None))
    for event in t.events:
        for token in event.target_symbols:
            name, unit = split_symbol_token(token)
            context: Optional[Dimension] = None
            if unit is not None:
                try:
                    context = parse_unit(unit)
                except UnitError:
                    context = None  # malformed context is reported as unregistered use
            usages.append(SymbolUsage(name, event.scene_id, context))
    return usages


def symbol_unit_check(ledger: Sequence[SymbolEntry], narration: DraftArtifact,
                      t: Timeline) -> list[ValidationFinding]:
    violations = ledger_check_usage(ledger, extract_usages(ledger, narration, t))
    return [
        ValidationFinding("symbol_unit", t.scene_id, EITHER, "error",
                          f"{v.kind}: {v.symbol} ({v.detail})", code=v.kind)
        for v in violations
    ]


# --- goal coverage check ----------------------------------------------------------

def goal_coverage_check(scene_plan: ScenePlan, narration: DraftArtifact,
                        t: Timeline) -> list[ValidationFinding]:
    findings = []
    text = CUE_SENTINEL_RE.sub("", narration.content)
    for keyword in scene_plan.goal_keywords:
        if not re.search(rf"\b{re.escape(keyword)}\b", text, flags=re.IGNORECASE):
            findings.append(ValidationFinding(
                "goal_coverage", scene_plan.scene_id, NARRATION, "error",
                f"goal keyword {keyword!r} missing from narration", code="MissingKeyword"))
    keyword_set = {k.lower() for k in scene_plan.goal_keywords}
    signaled = any(
        event.kind in ("highlight", "transform")
        and any(split_symbol_token(tok)[0].lower() in keyword_set for tok in event.target_symbols)
        for event in t.events
    )
    if not signaled:
        findings.append(ValidationFinding(
            "goal_coverage", scene_plan.scene_id, CODE, "error",
            "no highlight/transform event targets a goal-keyword symbol", code="KeyStepNotSignaled"))
    return findings


# --- scene validation and routing ---------------------------------------------------

def validate_scene(scene_plan: ScenePlan, ledger: Sequence[SymbolEntry],
                   narration: DraftArtifact, code: DraftArtifact, t: Timeline,
                   engine: RenderEngine, tolerance_s: float = 0.5,
                   budget_s: float = DEFAULT_STUB_BUDGET_S) -> ValidationReport:
    findings = []
    findings += run_check(code, engine, budget_s)
    findings += alignment_check(t, tolerance_s)
    findings += symbol_unit_check(ledger, narration, t)
    findings += goal_coverage_check(scene_plan, narration, t)
    return ValidationReport.build(scene_plan.scene_id, findings,
                                  narration.version, code.version)


MERGE = "merge"
REGENERATE = "regenerate"
ESCALATE = "escalate_to_review"

_TRACK_ORDER = {CODE: 0, EITHER: 1, NARRATION: 2}


@dataclass(frozen=True)
class Decision:
    action: str
    scene_id: int
    track: Optional[str] = None


def route(report: ValidationReport, attempts_exhausted: bool = False) -> Decision:
    """Merge when passed; otherwise regenerate the most blamed track
    (ties break code before narration); escalate once attempts run out."""
    if report.passed:
        return Decision(MERGE, report.scene_id)
    if attempts_exhausted:
        return Decision(ESCALATE, report.scene_id)
    errors = [f for f in report.findings if f.severity == "error"]
    errors.sort(key=lambda f: _TRACK_ORDER[f.track_hint])
    track = errors[0].track_hint
    if track == EITHER:
        track = CODE
    return Decision(REGENERATE, report.scene_id, track)


def report_to_json(report: ValidationReport) -> dict:
    return {
        "scene_id": report.scene_id,
        "passed": report.passed,
        "checked_versions": report.checked_versions,
        "findings": [
            {
                "check": f.check,
                "scene_id": f.scene_id,
                "track_hint": f.track_hint,
                "severity": f.severity,
                "message": f.message,
                "code": f.code,
                "locus": f.locus,
            }
            for f in report.findings
        ],
    }


def report_from_json(data: dict) -> ValidationReport:
    findings = tuple(
        ValidationFinding(f["check"], f["scene_id"], f["track_hint"], f["severity"],
                          f["message"], f.get("code", ""), f.get("locus"))
        for f in data["findings"]
    )
    return ValidationReport(data["scene_id"], findings, data["passed"], data["checked_versions"])
