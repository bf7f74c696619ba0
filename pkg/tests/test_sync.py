import dataclasses

import pytest

from scenesmith.sync import (
    Binding,
    NarrationCue,
    OrphanBinding,
    ParseError,
    RetimeInfeasible,
    Timeline,
    VisualEvent,
    check_alignment,
    check_segmentation,
    extract_timeline,
    parse_cues,
    parse_events,
    retime,
    timeline_from_json,
    timeline_to_json,
)


def _cue(cid, start, dur=4.0, text="hello"):
    return NarrationCue(cid, 1, text, start, dur)


def _event(eid, start, dur=2.0, kind="highlight", symbols=("v",)):
    return VisualEvent(eid, 1, kind, start, dur, symbols)


def _timeline(cues, events, bindings=None, duration=90.0):
    if bindings is None:
        bindings = [Binding(c.cue_id, "e" + c.cue_id[1:]) for c in cues
                    if any(e.event_id == "e" + c.cue_id[1:] for e in events)]
    return Timeline(1, tuple(cues), tuple(events), tuple(bindings), duration)


class TestParsing:
    def test_parse_cues_orders_and_durations(self):
        text = "[[cue:c2 @ 10.0]] second\n[[cue:c1 @ 0.0]] first\n"
        cues = parse_cues(text, 1, 30.0)
        assert [c.cue_id for c in cues] == ["c1", "c2"]
        assert cues[0].est_duration_s == pytest.approx(10.0)
        assert cues[1].est_duration_s == pytest.approx(20.0)
        assert cues[0].text == "first"

    def test_malformed_cue_raises(self):
        with pytest.raises(ParseError):
            parse_cues("[[cue:c1 at 0.0]] broken", 1, 30.0)

    def test_parse_events(self):
        code = "# @event e1 highlight 0.00 2.00 v\n# @event e2 transform 5.00 1.50 v:m/s g\n"
        events = parse_events(code, 1)
        assert [e.event_id for e in events] == ["e1", "e2"]
        assert events[1].target_symbols == ("v:m/s", "g")

    def test_negative_start_rejected(self):
        with pytest.raises(ParseError):
            parse_events("# @event e1 highlight -1.0 2.0 v", 1)

    def test_binding_by_suffix(self, plan, drafts):
        scene = plan.scenes[0]
        t = extract_timeline(drafts[1]["narration"], drafts[1]["code"], scene)
        assert len(t.bindings) == len(t.cues)
        for b in t.bindings:
            assert b.cue_id[1:] == b.event_id[1:]

    def test_orphan_binding_rejected(self):
        with pytest.raises(OrphanBinding):
            Timeline(1, (_cue("c1", 0.0),), (), (Binding("c1", "e1"),), 60.0)


class TestAlignment:
    def test_tolerance_is_inclusive(self):
        t = _timeline([_cue("c1", 0.0)], [_event("e1", 0.5)])
        assert check_alignment(t, tolerance_s=0.5).passed

    def test_drift_flagged_beyond_tolerance(self):
        t = _timeline([_cue("c1", 0.0)], [_event("e1", 1.2)])
        report = check_alignment(t, tolerance_s=0.5)
        assert [f.kind for f in report.flags] == ["Drift"]
        assert report.flags[0].drift_s == pytest.approx(1.2)

    def test_unbound_cue_flagged(self):
        t = _timeline([_cue("c1", 0.0)], [], bindings=[])
        report = check_alignment(t)
        assert [f.kind for f in report.flags] == ["UnboundCue"]


class TestRetime:
    def test_shift_events_snaps_to_cue(self):
        t = _timeline([_cue("c1", 0.0), _cue("c2", 10.0)],
                      [_event("e1", 1.2), _event("e2", 10.0)])
        fixed = retime(t, "shift_events")
        assert fixed.event("e1").start_s == pytest.approx(0.0)
        assert check_alignment(fixed).passed

    def test_idempotent_when_aligned(self):
        t = _timeline([_cue("c1", 0.0)], [_event("e1", 0.2)])
        assert retime(t) is t

    def test_infeasible_on_collision(self):
        # both drifted events would snap onto the same instant
        bad = _timeline([_cue("c1", 5.0, dur=1.0), _cue("c2", 5.0, dur=1.0)],
                        [_event("e1", 7.0), _event("e2", 9.0)])
        with pytest.raises(RetimeInfeasible):
            retime(bad)

    def test_infeasible_past_scene_end(self):
        t = _timeline([_cue("c1", 89.5)], [_event("e1", 80.0, dur=8.0)], duration=90.0)
        with pytest.raises(RetimeInfeasible):
            retime(t, "shift_events")

    def test_unbound_cue_not_retimable(self):
        t = _timeline([_cue("c1", 0.0)], [], bindings=[])
        with pytest.raises(RetimeInfeasible):
            retime(t)


class TestSegmentation:
    def test_plan_durations_pass(self, plan, drafts):
        timelines = [extract_timeline(drafts[s.scene_id]["narration"],
                                      drafts[s.scene_id]["code"], s) for s in plan.scenes]
        assert check_segmentation(timelines, plan).passed

    def test_short_scene_flagged(self, plan, drafts):
        scene = plan.scenes[0]
        t = extract_timeline(drafts[1]["narration"], drafts[1]["code"], scene)
        short = dataclasses.replace(t, scene_duration_s=30.0)
        timelines = [short] + [
            extract_timeline(drafts[s.scene_id]["narration"], drafts[s.scene_id]["code"], s)
            for s in plan.scenes[1:]
        ]
        report = check_segmentation(timelines, plan)
        kinds = {f.kind for f in report.flags}
        assert "SceneTooShort" in kinds


class TestJson:
    def test_round_trip(self, plan, drafts):
        scene = plan.scenes[0]
        t = extract_timeline(drafts[1]["narration"], drafts[1]["code"], scene)
        assert timeline_from_json(timeline_to_json(t)) == t
