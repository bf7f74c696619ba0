"""Domain types for briefs, lesson plans and the symbol ledger.

Includes the unit-expression parser and exact (Fraction-based) dimension
algebra used by the symbol/unit consistency checks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

BASE_DIMENSIONS = ("L", "M", "T", "I", "Th", "N", "J")

# Default scene-length policy, seconds. The 60-120 band is configurable per
# project; these are only the defaults.
SCENE_MIN_S = 60.0
SCENE_MAX_S = 120.0
BRIEF_MIN_S = 180.0
BRIEF_MAX_S = 600.0
TOTAL_TOLERANCE = 0.20

AUDIENCE_LEVELS = ("none", "basic", "intermediate", "advanced")


class UnitError(ValueError):
    pass


class UnknownUnit(UnitError):
    def __init__(self, token: str):
        super().__init__(f"unknown unit {token!r}")
        self.token = token


class MalformedExpression(UnitError):
    def __init__(self, position: int, detail: str = ""):
        super().__init__(f"malformed unit expression at position {position}" + (f": {detail}" if detail else ""))
        self.position = position


class DuplicateSymbol(ValueError):
    def __init__(self, name: str):
        super().__init__(f"symbol {name!r} already registered with a different meaning or dimension")
        self.name = name


@dataclass(frozen=True)
class Dimension:
    """Vector of rational exponents over the seven SI base dimensions.

    Stored as a sorted tuple of (axis, Fraction) pairs with zero entries
    dropped, so equality is exact and values are hashable.
    """

    exponents: tuple[tuple[str, Fraction], ...] = ()

    @staticmethod
    def of(**exps: int | Fraction | str) -> "Dimension":
        return Dimension.from_mapping(exps)

    @staticmethod
    def from_mapping(mapping: Mapping[str, int | Fraction | str]) -> "Dimension":
        items = []
        for axis, exp in mapping.items():
            if axis not in BASE_DIMENSIONS:
                raise ValueError(f"unknown base dimension {axis!r}")
            frac = Fraction(exp)
            if frac != 0:
                items.append((axis, frac))
        return Dimension(tuple(sorted(items)))

    def as_dict(self) -> dict[str, Fraction]:
        return dict(self.exponents)

    @property
    def is_dimensionless(self) -> bool:
        return not self.exponents

    def __str__(self) -> str:
        if not self.exponents:
            return "1"
        return "*".join(f"{a}^{e}" if e != 1 else a for a, e in self.exponents)


DIMENSIONLESS = Dimension()


def dim_mul(a: Dimension, b: Dimension) -> Dimension:
    out = a.as_dict()
    for axis, exp in b.exponents:
        out[axis] = out.get(axis, Fraction(0)) + exp
    return Dimension.from_mapping(out)


def dim_div(a: Dimension, b: Dimension) -> Dimension:
    return dim_mul(a, dim_pow(b, -1))


def dim_pow(a: Dimension, q: int | Fraction) -> Dimension:
    q = Fraction(q)
    return Dimension.from_mapping({axis: exp * q for axis, exp in a.exponents})


_BASE_UNITS = {
    "m": Dimension.of(L=1),
    "s": Dimension.of(T=1),
    "kg": Dimension.of(M=1),
    "A": Dimension.of(I=1),
    "K": Dimension.of(Th=1),
    "mol": Dimension.of(N=1),
    "cd": Dimension.of(J=1),
}

_DERIVED_UNITS = {
    "N": Dimension.of(M=1, L=1, T=-2),
    "J": Dimension.of(M=1, L=2, T=-2),
    "Hz": Dimension.of(T=-1),
    "rad": DIMENSIONLESS,
    "1": DIMENSIONLESS,
}

UNIT_TABLE = {**_BASE_UNITS, **_DERIVED_UNITS}

_TOKEN_RE = re.compile(r"\s*(?:(?P<ident>[A-Za-z]+|1)|(?P<op>[*/^])|(?P<int>-?\d+))")


def _tokenize(expr: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(expr):
        m = _TOKEN_RE.match(expr, pos)
        if m is None or m.end() == pos:
            if expr[pos:].strip() == "":
                break
            raise MalformedExpression(pos, f"unexpected character {expr[pos]!r}")
        if m.lastgroup is None:
            break
        kind = m.lastgroup
        tokens.append((kind, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser for: expr := term (('*'|'/') term)*;
    term := unit ('^' signed_rational)?; unit := identifier | '1'."""

    def __init__(self, expr: str):
        self.expr = expr
        self.tokens = _tokenize(expr)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            raise MalformedExpression(len(self.expr), "unexpected end of expression")
        self.i += 1
        return tok

    def parse(self) -> Dimension:
        if not self.tokens:
            raise MalformedExpression(0, "empty expression")
        dim = self._term()
        while (tok := self._peek()) is not None:
            if tok[0] != "op" or tok[1] not in "*/":
                raise MalformedExpression(tok[2], f"expected operator, got {tok[1]!r}")
            self._next()
            rhs = self._term()
            dim = dim_mul(dim, rhs) if tok[1] == "*" else dim_div(dim, rhs)
        return dim

    def _term(self) -> Dimension:
        kind, value, pos = self._next()
        if kind == "int" and value == "1":
            kind = "ident"
        if kind != "ident":
            raise MalformedExpression(pos, f"expected unit, got {value!r}")
        if value not in UNIT_TABLE:
            raise UnknownUnit(value)
        dim = UNIT_TABLE[value]
        tok = self._peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self._next()
            dim = dim_pow(dim, self._rational())
        return dim

    def _rational(self) -> Fraction:
        kind, value, pos = self._next()
        if kind == "ident" and value == "1":
            kind = "int"
        if kind != "int":
            raise MalformedExpression(pos, f"expected exponent, got {value!r}")
        num = int(value)
        # A '/' directly followed by an integer belongs to the exponent
        # (m^1/2); otherwise it is the quotient operator (m^1/s).
        tok = self._peek()
        if tok is not None and tok[0] == "op" and tok[1] == "/":
            nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
            if nxt is not None and nxt[0] == "int" and not nxt[1].startswith("-"):
                self._next()
                _, den, _ = self._next()
                return Fraction(num, int(den))
        return Fraction(num)


def parse_unit(expr: str) -> Dimension:
    """Parse a product/quotient/power unit expression into a Dimension."""
    return _Parser(expr).parse()


@dataclass(frozen=True)
class ConceptBrief:
    topic_title: str
    audience_level: str
    learning_objective: str
    target_duration_s: float
    notes: Optional[str] = None

    def __post_init__(self):
        if not self.topic_title.strip():
            raise ValueError("topic_title must be non-empty")
        if not self.learning_objective.strip():
            raise ValueError("learning_objective must be non-empty")
        if self.audience_level not in AUDIENCE_LEVELS:
            raise ValueError(f"audience_level must be one of {AUDIENCE_LEVELS}")
        if not (BRIEF_MIN_S <= self.target_duration_s <= BRIEF_MAX_S):
            raise ValueError(f"target_duration_s must be in [{BRIEF_MIN_S}, {BRIEF_MAX_S}]")


@dataclass(frozen=True)
class SymbolEntry:
    name: str
    meaning: str
    unit_expr: str
    dimension: Dimension
    assumptions: tuple[str, ...] = ()
    introduced_in_scene: int = 1

    def __post_init__(self):
        if not self.meaning.strip():
            raise ValueError("meaning must be non-empty")

    @staticmethod
    def make(name: str, meaning: str, unit_expr: str, assumptions: Sequence[str] = (),
             introduced_in_scene: int = 1) -> "SymbolEntry":
        return SymbolEntry(name, meaning, unit_expr, parse_unit(unit_expr),
                           tuple(assumptions), introduced_in_scene)


@dataclass(frozen=True)
class CodeConstraints:
    allowed_primitives: tuple[str, ...]
    layout_hints: tuple[str, ...] = ()
    timing_marks: tuple[float, ...] = ()


@dataclass(frozen=True)
class ScenePlan:
    scene_id: int
    goal: str
    goal_keywords: tuple[str, ...]
    narration_cues: tuple[str, ...]
    storyboard: tuple[str, ...]
    code_constraints: CodeConstraints
    planned_duration_s: float


@dataclass(frozen=True)
class LessonPlan:
    brief: ConceptBrief
    scenes: tuple[ScenePlan, ...]
    ledger: tuple[SymbolEntry, ...]
    plan_version: str
    seed: int


def ledger_register(ledger: Sequence[SymbolEntry], entry: SymbolEntry) -> tuple[SymbolEntry, ...]:
    """Append an entry; idempotent for byte-identical entries.

    Raises DuplicateSymbol when the name exists with a different meaning or
    dimension (notation drift).
    """
    if entry.dimension != parse_unit(entry.unit_expr):
        raise ValueError(f"entry {entry.name!r}: dimension does not match unit_expr {entry.unit_expr!r}")
    for existing in ledger:
        if existing.name == entry.name:
            if existing == entry:
                return tuple(ledger)
            raise DuplicateSymbol(entry.name)
    return tuple(ledger) + (entry,)


@dataclass(frozen=True)
class Violation:
    kind: str  # "UnregisteredSymbol" | "DimensionMismatch"
    symbol: str
    scene_id: int
    detail: str = ""


@dataclass(frozen=True)
class SymbolUsage:
    symbol: str
    scene_id: int
    context_dimension: Optional[Dimension] = None


def ledger_check_usage(ledger: Sequence[SymbolEntry],
                       usages: Iterable[SymbolUsage]) -> list[Violation]:
    """One violation per unregistered symbol or dimension mismatch."""
    registry = {e.name: e for e in ledger}
    violations = []
    for usage in usages:
        entry = registry.get(usage.symbol)
        if entry is None:
            violations.append(Violation("UnregisteredSymbol", usage.symbol, usage.scene_id,
                                        "symbol not in ledger"))
        elif usage.context_dimension is not None and usage.context_dimension != entry.dimension:
            violations.append(Violation(
                "DimensionMismatch", usage.symbol, usage.scene_id,
                f"context {usage.context_dimension} vs registered {entry.dimension}"))
    return violations


@dataclass(frozen=True)
class PlanDefect:
    kind: str
    scene_id: Optional[int]
    message: str


def validate_plan(plan: LessonPlan,
                  scene_min_s: float = SCENE_MIN_S,
                  scene_max_s: float = SCENE_MAX_S,
                  total_tolerance: float = TOTAL_TOLERANCE) -> list[PlanDefect]:
    """Structural plan checks; an empty list means the plan is well-formed."""
    defects: list[PlanDefect] = []

    for idx, scene in enumerate(plan.scenes, start=1):
        if scene.scene_id != idx:
            defects.append(PlanDefect("NonContiguousSceneIds", scene.scene_id,
                                      f"expected scene id {idx}, got {scene.scene_id}"))
        if not scene.goal.strip():
            defects.append(PlanDefect("EmptyGoal", scene.scene_id, "scene goal is empty"))
        if not scene.goal_keywords:
            defects.append(PlanDefect("NoGoalKeywords", scene.scene_id, "goal_keywords is empty"))
        if not scene.code_constraints.allowed_primitives:
            defects.append(PlanDefect("NoAllowedPrimitives", scene.scene_id,
                                      "allowed_primitives is empty"))
        if scene.planned_duration_s < scene_min_s:
            defects.append(PlanDefect("SceneTooShort", scene.scene_id,
                                      f"{scene.planned_duration_s} s < {scene_min_s} s floor"))
        elif scene.planned_duration_s > scene_max_s:
            defects.append(PlanDefect("SceneTooLong", scene.scene_id,
                                      f"{scene.planned_duration_s} s > {scene_max_s} s ceiling"))

    owners: dict[str, list[int]] = {}
    for scene in plan.scenes:
        for cue_id in scene.narration_cues:
            owners.setdefault(cue_id, []).append(scene.scene_id)
    for cue_id, scene_ids in owners.items():
        if len(scene_ids) > 1:
            defects.append(PlanDefect("CueMultiplyOwned", scene_ids[0],
                                      f"cue {cue_id!r} owned by scenes {scene_ids}"))

    total = sum(s.planned_duration_s for s in plan.scenes)
    target = plan.brief.target_duration_s
    if not (target * (1 - total_tolerance) <= total <= target * (1 + total_tolerance)):
        defects.append(PlanDefect("TotalDurationDrift", None,
                                  f"total {total:.1f} s outside +/-{total_tolerance:.0%} of target {target:.1f} s"))

    # Ledger consistency: re-registering every entry must not raise.
    seen: tuple[SymbolEntry, ...] = ()
    for entry in plan.ledger:
        try:
            seen = ledger_register(seen, entry)
        except (DuplicateSymbol, ValueError) as exc:
            defects.append(PlanDefect("LedgerInconsistency", entry.introduced_in_scene, str(exc)))

    return defects


# --- serialization helpers (plan.json schema) -------------------------------

def dimension_to_json(dim: Dimension) -> dict:
    return {axis: str(exp) for axis, exp in dim.exponents}


def dimension_from_json(data: Mapping[str, str]) -> Dimension:
    return Dimension.from_mapping({axis: Fraction(exp) for axis, exp in data.items()})


def plan_to_json(plan: LessonPlan) -> dict:
    return {
        "brief": {
            "topic_title": plan.brief.topic_title,
            "audience_level": plan.brief.audience_level,
            "learning_objective": plan.brief.learning_objective,
            "target_duration_s": plan.brief.target_duration_s,
            "notes": plan.brief.notes,
        },
        "scenes": [
            {
                "scene_id": s.scene_id,
                "goal": s.goal,
                "goal_keywords": list(s.goal_keywords),
                "narration_cues": list(s.narration_cues),
                "storyboard": list(s.storyboard),
                "code_constraints": {
                    "allowed_primitives": list(s.code_constraints.allowed_primitives),
                    "layout_hints": list(s.code_constraints.layout_hints),
                    "timing_marks": list(s.code_constraints.timing_marks),
                },
                "planned_duration_s": s.planned_duration_s,
            }
            for s in plan.scenes
        ],
        "ledger": [
            {
                "name": e.name,
                "meaning": e.meaning,
                "unit_expr": e.unit_expr,
                "dimension": dimension_to_json(e.dimension),
                "assumptions": list(e.assumptions),
                "introduced_in_scene": e.introduced_in_scene,
            }
            for e in plan.ledger
        ],
        "plan_version": plan.plan_version,
        "seed": plan.seed,
    }


def plan_from_json(data: Mapping) -> LessonPlan:
    brief = ConceptBrief(**data["brief"])
    scenes = tuple(
        ScenePlan(
            scene_id=s["scene_id"],
            goal=s["goal"],
            goal_keywords=tuple(s["goal_keywords"]),
            narration_cues=tuple(s["narration_cues"]),
            storyboard=tuple(s["storyboard"]),
            code_constraints=CodeConstraints(
                allowed_primitives=tuple(s["code_constraints"]["allowed_primitives"]),
                layout_hints=tuple(s["code_constraints"]["layout_hints"]),
                timing_marks=tuple(s["code_constraints"]["timing_marks"]),
            ),
            planned_duration_s=s["planned_duration_s"],
        )
        for s in data["scenes"]
    )
    ledger = tuple(
        SymbolEntry(
            name=e["name"],
            meaning=e["meaning"],
            unit_expr=e["unit_expr"],
            dimension=dimension_from_json(e["dimension"]),
            assumptions=tuple(e["assumptions"]),
            introduced_in_scene=e["introduced_in_scene"],
        )
        for e in data["ledger"]
    )
    return LessonPlan(brief=brief, scenes=scenes, ledger=ledger,
                      plan_version=data["plan_version"], seed=data["seed"])
