// SceneCard view models, built strictly from API payloads. The card never
// derives a state transition client-side; it renders what the server said.

import type {
  Criterion,
  SceneDetailPayload,
  ScenePayload,
  SceneState,
  TimelinePayload,
  Verdict,
} from "./types.js";
import { CRITERIA, SCENE_STATES } from "./types.js";

export interface TimelineBar {
  id: string;
  kind: "cue" | "event";
  label: string;
  // horizontal placement as fractions of the scene duration, in [0, 1]
  offset: number;
  width: number;
  // drift of the bound pair in seconds; undefined for unbound items
  driftS?: number;
  // red iff the server-reported drift exceeds the server-reported tolerance
  drifted: boolean;
}

export interface SceneCard {
  sceneId: number;
  state: SceneState;
  version: number;
  artifactVersions: Record<string, number>;
  criteria: Record<Criterion, Verdict | "pending">;
  findingCounts: Record<string, number>;
  validationPassed: boolean | null;
  toleranceS: number;
  bars: TimelineBar[];
}

export class UnknownStateError extends Error {
  constructor(state: string) {
    super(`server reported a state the review machine cannot produce: ${state}`);
  }
}

function asSceneState(state: string): SceneState {
  if (!(SCENE_STATES as readonly string[]).includes(state)) {
    throw new UnknownStateError(state);
  }
  return state as SceneState;
}

function criteriaView(
  payload: ScenePayload,
): Record<Criterion, Verdict | "pending"> {
  const view = {} as Record<Criterion, Verdict | "pending">;
  for (const criterion of CRITERIA) {
    view[criterion] = payload.review.criteria[criterion] ?? "pending";
  }
  return view;
}

function timelineBars(detail: SceneDetailPayload): TimelineBar[] {
  const timeline: TimelinePayload | undefined = detail.timeline;
  if (timeline === undefined) {
    return [];
  }
  const duration = timeline.scene_duration_s;
  const driftByCue = new Map<string, number>();
  const driftByEvent = new Map<string, number>();
  for (const d of detail.binding_drifts ?? []) {
    driftByCue.set(d.cue_id, d.drift_s);
    driftByEvent.set(d.event_id, d.drift_s);
  }
  const red = (drift: number | undefined): boolean =>
    drift !== undefined && drift > detail.tolerance_s;

  const bars: TimelineBar[] = [];
  for (const cue of timeline.cues) {
    const drift = driftByCue.get(cue.cue_id);
    bars.push({
      id: cue.cue_id,
      kind: "cue",
      label: cue.text,
      offset: cue.start_s / duration,
      width: cue.est_duration_s / duration,
      driftS: drift,
      drifted: red(drift),
    });
  }
  for (const event of timeline.events) {
    const drift = driftByEvent.get(event.event_id);
    bars.push({
      id: event.event_id,
      kind: "event",
      label: `${event.kind} ${event.target_symbols.join(" ")}`.trim(),
      offset: event.start_s / duration,
      width: event.duration_s / duration,
      driftS: drift,
      drifted: red(drift),
    });
  }
  return bars;
}

export function buildSceneCard(payload: ScenePayload): SceneCard {
  return {
    sceneId: payload.scene_id,
    state: asSceneState(payload.state),
    version: payload.version,
    artifactVersions: payload.artifact_versions,
    criteria: criteriaView(payload),
    findingCounts: {},
    validationPassed: null,
    toleranceS: payload.tolerance_s,
    bars: [],
  };
}

export function buildDetailCard(detail: SceneDetailPayload): SceneCard {
  const card = buildSceneCard(detail);
  card.bars = timelineBars(detail);
  if (detail.validation !== undefined) {
    card.validationPassed = detail.validation.passed;
    for (const finding of detail.validation.findings) {
      card.findingCounts[finding.check] =
        (card.findingCounts[finding.check] ?? 0) + 1;
    }
  }
  return card;
}
