import random

import pytest

from scenesmith.review import (
    CRITERIA,
    IllegalTransition,
    MissingNote,
    ProjectStore,
    StoreCorrupt,
    UnknownScene,
    VersionConflict,
)

PID = "proj"


@pytest.fixture
def store(tmp_path):
    s = ProjectStore(tmp_path)
    s.register_scene(PID, 1)
    return s


def _approve(store, sid=1):
    store.mark_validated(PID, sid)
    store.submit_for_review(PID, sid)
    for criterion in CRITERIA:
        store.record_verdict(PID, sid, criterion, "pass")


class TestHappyPath:
    def test_full_approval_path(self, store):
        _approve(store)
        assert store.scene(PID, 1).state == "approved"
        store.mark_rendered(PID, 1)
        assert store.scene(PID, 1).state == "rendered"

    def test_fail_requires_note(self, store):
        store.mark_validated(PID, 1)
        store.submit_for_review(PID, 1)
        with pytest.raises(MissingNote):
            store.record_verdict(PID, 1, "engineering", "fail")
        store.record_verdict(PID, 1, "engineering", "fail", note="events drift")
        assert store.scene(PID, 1).review.criteria["engineering"] == "fail"

    def test_regeneration_loop(self, store):
        store.mark_validated(PID, 1)
        store.submit_for_review(PID, 1)
        store.record_verdict(PID, 1, "engineering", "fail", note="bad timing")
        store.request_regeneration(PID, 1, "code", "retime the events")
        assert store.scene(PID, 1).state == "changes_requested"
        store.notify_artifact(PID, 1, "code", 2)
        record = store.scene(PID, 1)
        assert record.state == "draft"
        assert record.artifact_versions["code"] == 2

    def test_approved_artifact_mutation_resets_to_draft(self, store):
        _approve(store)
        store.notify_artifact(PID, 1, "narration", 2)
        assert store.scene(PID, 1).state == "draft"


class TestGuards:
    def test_cannot_render_unapproved(self, store):
        store.mark_validated(PID, 1)
        with pytest.raises(IllegalTransition):
            store.mark_rendered(PID, 1)

    def test_version_conflict(self, store):
        record = store.scene(PID, 1)
        store.mark_validated(PID, 1, expected_version=record.version)
        with pytest.raises(VersionConflict):
            store.submit_for_review(PID, 1, expected_version=record.version)

    def test_unknown_scene(self, store):
        with pytest.raises(UnknownScene):
            store.scene(PID, 99)

    def test_unknown_criterion_and_verdict(self, store):
        store.mark_validated(PID, 1)
        store.submit_for_review(PID, 1)
        with pytest.raises(ValueError):
            store.record_verdict(PID, 1, "style", "pass")
        with pytest.raises(ValueError):
            store.record_verdict(PID, 1, "engineering", "maybe")


# Every mutation the machine exposes, as (name, callable) pairs.
def _ops():
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


class TestExhaustiveEnumeration:
    MAX_LEN = 6

    def test_rendered_only_through_three_passes(self, tmp_path):
        """DFS over all call sequences up to length 6; sequences die at the
        first illegal call, so the legal tree stays small."""
        ops = _ops()
        rendered_paths = []
        legal_paths = 0
        counter = [0]

        def replay(prefix):
            counter[0] += 1
            store = ProjectStore(tmp_path / f"s{counter[0]}")
            store.register_scene(PID, 1)
            for _, op in prefix:
                op(store)
            return store

        def dfs(prefix):
            nonlocal legal_paths
            if len(prefix) == self.MAX_LEN:
                return
            for name, op in ops:
                try:
                    store = replay(prefix + [(name, op)])
                except (IllegalTransition, MissingNote, VersionConflict):
                    continue
                legal_paths += 1
                if store.scene(PID, 1).state == "rendered":
                    rendered_paths.append([n for n, _ in prefix] + [name])
                dfs(prefix + [(name, op)])

        dfs([])
        assert legal_paths > 0
        assert rendered_paths, "rendered must be reachable within 6 calls"
        passes = {"pass_subject", "pass_teaching", "pass_engineering"}
        for path in rendered_paths:
            assert passes <= set(path), path
            assert path[-1] == "render"
            assert "fail_engineering" not in path


class TestCrashReplay:
    def test_journal_replay_equivalence(self, tmp_path):
        ops = _ops()
        rng = random.Random(1234)
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
            before = store.scene(PID, 1)
            reloaded = ProjectStore(root).scene(PID, 1)
            assert reloaded == before, f"case {case} diverged after replay"

    def test_corrupt_journal_reports_position(self, tmp_path):
        store = ProjectStore(tmp_path)
        store.register_scene(PID, 1)
        store.mark_validated(PID, 1)
        journal = tmp_path / PID / "review" / "journal.jsonl"
        journal.write_text(journal.read_text() + "{not json\n")
        with pytest.raises(StoreCorrupt) as err:
            ProjectStore(tmp_path)
        assert err.value.position == 2  # zero-based line index in the journal
