"""End-to-end acceptance checks with pinned tolerances and runtime budgets."""

import dataclasses
import json
import random
import re
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from scenesmith.analysis import ancova, cohen_kappa, cronbach_alpha, paired_t
from scenesmith.assembly import (
    bless,
    load_regression_scene,
    regression_run,
    save_regression_inputs,
)
from scenesmith.cli import main
from scenesmith.generation import regenerate_part
from scenesmith.plan_model import (
    SymbolEntry,
    SymbolUsage,
    dim_div,
    dim_mul,
    dim_pow,
    ledger_check_usage,
    ledger_register,
    parse_unit,
)
from scenesmith.review import (
    CRITERIA,
    IllegalTransition,
    MissingNote,
    ProjectStore,
    VersionConflict,
)
from scenesmith.sync import extract_timeline
from scenesmith.validation import route, validate_scene


class TestStatisticsOracles:
    def test_oracle_suite_under_budget(self):
        start = time.perf_counter()

        assert cohen_kappa(np.array([[40, 10], [10, 40]])) == pytest.approx(0.6)

        identical = np.tile(np.array([[1.0], [2.0], [3.0], [4.0]]), (1, 4))
        assert cronbach_alpha(identical) == pytest.approx(1.0)

        # two uncorrelated items with equal variance -> alpha of 0
        uncorrelated = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 1.0], [4.0, 3.0]])
        assert cronbach_alpha(uncorrelated) == pytest.approx(0.0, abs=1e-12)

        diffs = np.array([1.0, 2.0, 2.0])
        result = paired_t(diffs, np.zeros(3))
        assert result.effect_size == pytest.approx(2.8868, abs=1e-4)
        assert result.statistic == pytest.approx(result.effect_size * np.sqrt(3))

        rng = np.random.default_rng(99)
        for _ in range(5):
            n = int(rng.integers(8, 21))
            pre = rng.normal(60, 8, size=n)
            cond = np.zeros(n)
            cond[: n // 2] = 1.0
            post = 20 + 0.8 * pre + 4 * cond + rng.normal(0, 3, size=n)
            got = ancova(post, pre, cond)
            beta, f, eta = _normal_equations_ancova(post, pre, cond)
            assert got.coefficients == pytest.approx(tuple(beta), abs=1e-9)
            assert got.F == pytest.approx(f, abs=1e-9)
            assert got.partial_eta_sq == pytest.approx(eta, abs=1e-9)

        assert time.perf_counter() - start < 5.0


def _normal_equations_ancova(post, pre, cond):
    X = np.column_stack([np.ones(len(post)), cond, pre])
    beta = np.linalg.solve(X.T @ X, X.T @ post)
    resid = post - X @ beta
    ss_err = float(resid @ resid)
    X0 = np.column_stack([np.ones(len(post)), pre])
    beta0 = np.linalg.solve(X0.T @ X0, X0.T @ post)
    ss_err0 = float((post - X0 @ beta0) @ (post - X0 @ beta0))
    ss_cond = ss_err0 - ss_err
    f = ss_cond / (ss_err / (len(post) - 3))
    return beta, f, ss_cond / (ss_cond + ss_err)


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("analysis")
    start = time.perf_counter()
    result = CliRunner().invoke(
        main, ["analyze", "--synthetic", "--seed", "42", "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert result.exit_code == 0, result.output
    assert elapsed < 30.0
    return json.loads((out / "report.json").read_text())


class TestSyntheticStudyReport:
    """The published crossover results, reproduced on calibrated synthetics."""

    EXPECTED_PAIRED = {
        "gain": (6.74, 0.67),
        "imi": (9.44, 0.94),
        "tlx": (-4.06, -0.41),
        "satisfaction": (16.35, 1.64),
        "minutes": (-8.56, -0.86),
    }

    def test_paired_results(self, report):
        for name, (t, d) in self.EXPECTED_PAIRED.items():
            block = report["paired"][name]
            assert block["statistic"] == pytest.approx(t, abs=0.15), name
            assert block["effect_size"] == pytest.approx(d, abs=0.15), name
            assert block["df"] == 99

    def test_ancova(self, report):
        assert report["ancova"]["f_statistic"] == pytest.approx(38.85, rel=0.25)
        assert 0.12 <= report["ancova"]["partial_eta_sq"] <= 0.21

    def test_subgroup_contrast(self, report):
        block = report["subgroup"]["test"]
        assert block["statistic"] == pytest.approx(-2.11, abs=0.4)
        assert block["df"] == 98

    def test_imi_reliability(self, report):
        assert 0.78 <= report["reliability"]["imi"]["alpha"] <= 0.86


class TestPairedIdentity:
    def test_t_equals_d_root_n(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(3, 40))
            a = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 4), size=n)
            b = a + rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 3), size=n)
            if np.std(a - b, ddof=1) == 0:
                continue
            result = paired_t(a, b)
            assert result.statistic == pytest.approx(
                result.effect_size * np.sqrt(n), rel=1e-12)


BRIEF = {
    "topic_title": "Projectile Motion",
    "audience_level": "basic",
    "learning_objective": "Predict the flight of a launched object.",
    "target_duration_s": 360,
}


class TestEndToEndDeterminism:
    def _build(self, runner, parent):
        root = parent / "proj"
        for args in (["plan", str(parent / "brief.json"), "--root", str(root),
                      "--seed", "7"],
                     ["draft", "--root", str(root), "--seed", "7"],
                     ["validate", "--root", str(root)],
                     ["assemble", "--root", str(root), "--seed", "7"]):
            result = runner.invoke(main, args)
            assert result.exit_code == 0, f"{args}: {result.output}"
        return root

    def test_two_runs_are_byte_identical(self, tmp_path):
        start = time.perf_counter()
        runner = CliRunner()
        roots = []
        for name in ("run_a", "run_b"):
            parent = tmp_path / name
            parent.mkdir()
            (parent / "brief.json").write_text(json.dumps(BRIEF))
            roots.append(self._build(runner, parent))

        files_a = sorted(p.relative_to(roots[0]) for p in roots[0].rglob("*")
                         if p.is_file())
        files_b = sorted(p.relative_to(roots[1]) for p in roots[1].rglob("*")
                         if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            a, b = (roots[0] / rel).read_bytes(), (roots[1] / rel).read_bytes()
            if rel.name == "manifest.json":
                ma, mb = json.loads(a), json.loads(b)
                ma.pop("created_at"), mb.pop("created_at")
                assert ma == mb
            else:
                assert a == b, f"{rel} differs between identical runs"

        plan_doc = json.loads((roots[0] / "plan.json").read_text())
        durations = [s["planned_duration_s"] for s in plan_doc["scenes"]]
        assert all(60.0 <= d <= 120.0 for d in durations)
        assert sum(durations) == pytest.approx(360.0, rel=0.20)
        assert time.perf_counter() - start < 60.0


# Each seeded fault corpus must trip exactly its own check and route to the
# track that owns the defect.

def _mutated(artifact, content):
    return dataclasses.replace(artifact, content=content)


def _validate(scene, plan, narration, code, engine):
    t = extract_timeline(narration, code, scene)
    return validate_scene(scene, plan.ledger, narration, code, t, engine)


class TestFaultInjection:
    @pytest.fixture
    def tracks(self, drafts):
        return dict(drafts[1])

    def _corpus(self, name, scene, tracks):
        narration, code = tracks["narration"], tracks["code"]
        if name == "forbidden_import":
            return narration, _mutated(code, "import os\n" + code.content)
        if name == "drift":
            def bump(m):
                return (f"# @event {m.group(1)} {m.group(2)} "
                        f"{float(m.group(3)) + 1.2:.2f}")
            content = re.sub(r"# @event (\S+) (\S+) ([0-9.]+)", bump,
                             code.content, count=1)
            return narration, _mutated(code, content)
        if name == "unit_mismatch":
            content = re.sub(r"(# @event \S+ \S+ [0-9.]+ [0-9.]+ \S+?)(?=\n)",
                             lambda m: m.group(1) + ":kg", code.content, count=1)
            return narration, _mutated(code, content)
        keyword = scene.goal_keywords[0]
        content = re.sub(rf"\b{re.escape(keyword)}\b", "something",
                         narration.content, flags=re.IGNORECASE)
        return _mutated(narration, content), code

    @pytest.mark.parametrize("name,check,track", [
        ("forbidden_import", "run", "code"),
        ("drift", "alignment", "code"),
        ("unit_mismatch", "symbol_unit", "code"),
        ("missing_keyword", "goal_coverage", "narration"),
    ])
    def test_corpus_trips_only_its_own_check(self, plan, tracks, engine,
                                             name, check, track):
        scene = plan.scenes[0]
        narration, code = self._corpus(name, scene, tracks)
        report = _validate(scene, plan, narration, code, engine)
        assert {f.check for f in report.findings} == {check}
        assert all(f.track_hint in (track, "either") for f in report.findings)
        if report.passed:
            assert route(report).action == "merge"
        else:
            decision = route(report)
            assert decision.action == "regenerate"
            assert decision.track == track

    def test_regeneration_increments_exactly_one_version(self, plan, drafts,
                                                         backend, engine):
        scene = plan.scenes[0]
        artifacts = {1: dict(drafts[1])}
        artifacts[1]["code"] = _mutated(artifacts[1]["code"],
                                        "import os\n" + artifacts[1]["code"].content)
        report = _validate(scene, plan, artifacts[1]["narration"],
                           artifacts[1]["code"], engine)
        decision = route(report)
        fresh = regenerate_part(plan, artifacts, 1, decision.track,
                                "forbidden import", backend)
        assert fresh.version == 2
        assert artifacts[1]["narration"].version == 1
        report2 = _validate(scene, plan, artifacts[1]["narration"], fresh, engine)
        assert report2.passed
        assert report2.checked_versions == {"narration": 1, "code": 2}


class TestUnitAlgebraProperties:
    UNITS = ["m", "s", "kg", "A", "K", "mol", "cd", "N", "J", "Hz", "rad", "1"]

    def _random_expression(self, rng):
        parts = []
        dim = None
        for i in range(rng.randint(1, 4)):
            unit = rng.choice(self.UNITS)
            term_dim = parse_unit(unit)
            term = unit
            kind = rng.choice(["none", "int", "rational"])
            if kind != "none":
                num = rng.randint(-4, 4)
                if kind == "int":
                    term = f"{unit}^{num}"
                    term_dim = dim_pow(term_dim, num)
                else:
                    den = rng.randint(1, 4)
                    term = f"{unit}^{num}/{den}"
                    term_dim = dim_pow(term_dim, Fraction(num, den))
            if i == 0:
                parts.append(term)
                dim = term_dim
            else:
                op = rng.choice(["*", "/"])
                parts.append(op + term)
                dim = dim_mul(dim, term_dim) if op == "*" else dim_div(dim, term_dim)
        return "".join(parts), dim

    def test_randomized_grammar_properties(self):
        rng = random.Random(424242)
        dimensionless = parse_unit("1")
        for case in range(1000):
            expr_a, dim_a = self._random_expression(rng)
            expr_b, dim_b = self._random_expression(rng)
            assert parse_unit(expr_a) == dim_a, expr_a
            assert parse_unit(f"{expr_a}*{expr_b}") == dim_mul(dim_a, dim_b)
            assert dim_div(parse_unit(expr_a), parse_unit(expr_a)) == dimensionless

    def test_ledger_round_trip_randomized(self):
        rng = random.Random(777)
        for case in range(1000):
            expr, dim = self._random_expression(rng)
            entry = SymbolEntry.make(f"x{case}", "quantity", expr)
            ledger = ledger_register((), entry)
            assert ledger_register(ledger, entry) == ledger
            usage = SymbolUsage(f"x{case}", 1, parse_unit(expr))
            assert ledger_check_usage(ledger, [usage]) == []


PID = "proj"


def _review_ops():
    return [
        ("validate", lambda s: s.mark_validated(PID, 1)),
        ("submit", lambda s: s.submit_for_review(PID, 1)),
        ("pass_subject", lambda s: s.record_verdict(PID, 1, "subject_matter", "pass")),
        ("pass_teaching", lambda s: s.record_verdict(PID, 1, "teaching_quality", "pass")),
        ("pass_engineering", lambda s: s.record_verdict(PID, 1, "engineering", "pass")),
        ("fail_engineering", lambda s: s.record_verdict(PID, 1, "engineering", "fail", "why")),
        ("regenerate", lambda s: s.request_regeneration(PID, 1, "code", "why")),
        ("artifact", lambda s: s.notify_artifact(PID, 1, "code", 2)),
        ("render", lambda s: s.mark_rendered(PID, 1)),
    ]


class TestReviewStateMachine:
    def test_exhaustive_rendered_requires_three_passes(self, tmp_path):
        ops = _review_ops()
        rendered_paths = []
        counter = [0]

        def replay(prefix):
            counter[0] += 1
            store = ProjectStore(tmp_path / f"s{counter[0]}")
            store.register_scene(PID, 1)
            for _, op in prefix:
                op(store)
            return store

        def dfs(prefix):
            if len(prefix) == 6:
                return
            for name, op in ops:
                try:
                    store = replay(prefix + [(name, op)])
                except (IllegalTransition, MissingNote, VersionConflict):
                    continue
                if store.scene(PID, 1).state == "rendered":
                    rendered_paths.append([n for n, _ in prefix] + [name])
                dfs(prefix + [(name, op)])

        dfs([])
        assert rendered_paths
        passes = {"pass_subject", "pass_teaching", "pass_engineering"}
        for path in rendered_paths:
            assert passes <= set(path), path
            assert path[-1] == "render"

    def test_crash_replay_equivalence(self, tmp_path):
        ops = _review_ops()
        rng = random.Random(4321)
        for case in range(200):
            root = tmp_path / f"case{case}"
            store = ProjectStore(root)
            store.register_scene(PID, 1)
            for _ in range(rng.randint(1, 10)):
                _, op = ops[rng.randrange(len(ops))]
                try:
                    op(store)
                except (IllegalTransition, MissingNote, VersionConflict):
                    pass
            assert ProjectStore(root).scene(PID, 1) == store.scene(PID, 1)


class TestRegressionHarness:
    @pytest.fixture
    def suite_dir(self, tmp_path, plan, backend, engine):
        suite = tmp_path / "regression"
        for scene in plan.scenes[:2]:
            ref = suite / f"scene_{scene.scene_id}"
            save_regression_inputs(ref, plan, scene.scene_id, seed=11)
            bless(ref, backend, engine)
        return suite

    def test_noop_regeneration_flags_nothing(self, suite_dir, backend, engine):
        suite = [load_regression_scene(p) for p in sorted(suite_dir.iterdir())]
        report = regression_run(suite, backend, engine)
        assert report.deviations == ()

    def test_injected_shift_flags_exactly_one_scene(self, suite_dir, backend, engine):
        ref = sorted(suite_dir.iterdir())[0]
        baseline = json.loads((ref / "baseline.json").read_text())
        for event in baseline["timeline"]["events"]:
            event["start_s"] = round(event["start_s"] + 1.0, 6)
        baseline["trace_digest"] = "0" * 64
        (ref / "baseline.json").write_text(json.dumps(baseline, indent=2,
                                                      sort_keys=True))
        suite = [load_regression_scene(p) for p in sorted(suite_dir.iterdir())]
        report = regression_run(suite, backend, engine)
        assert len(report.deviations) == 1
        assert report.deviations[0].scene_ref == str(ref)
