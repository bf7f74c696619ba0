// API payload types for the review service. These mirror the JSON the
// server emits; the UI never derives state transitions on its own.

export type SceneState =
  | "draft"
  | "validated"
  | "in_review"
  | "changes_requested"
  | "approved"
  | "rendered";

export const SCENE_STATES: readonly SceneState[] = [
  "draft",
  "validated",
  "in_review",
  "changes_requested",
  "approved",
  "rendered",
];

export type Criterion = "subject_matter" | "teaching_quality" | "engineering";

export const CRITERIA: readonly Criterion[] = [
  "subject_matter",
  "teaching_quality",
  "engineering",
];

export type Verdict = "pass" | "fail";

export interface ReviewBlock {
  criteria: Partial<Record<Criterion, Verdict>>;
  reviewer_note: string;
  decided_at: string | null;
}

export interface ScenePayload {
  scene_id: number;
  state: string;
  version: number;
  artifact_versions: Record<string, number>;
  review: ReviewBlock;
  tolerance_s: number;
}

export interface ArtifactPayload {
  version: number;
  content: string;
  provenance: Record<string, unknown>;
}

export interface TimelineCue {
  cue_id: string;
  scene_id: number;
  text: string;
  start_s: number;
  est_duration_s: number;
}

export interface TimelineEvent {
  event_id: string;
  scene_id: number;
  kind: string;
  start_s: number;
  duration_s: number;
  target_symbols: string[];
}

export interface TimelinePayload {
  scene_id: number;
  scene_duration_s: number;
  cues: TimelineCue[];
  events: TimelineEvent[];
  bindings: { cue_id: string; event_id: string }[];
}

export interface BindingDrift {
  cue_id: string;
  event_id: string;
  drift_s: number;
}

export interface ValidationFinding {
  check: string;
  scene_id: number;
  track_hint: string;
  severity: string;
  message: string;
  code: string;
  locus: string | null;
}

export interface ValidationPayload {
  scene_id: number;
  passed: boolean;
  findings: ValidationFinding[];
  checked_versions: Record<string, number>;
}

export interface SceneDetailPayload extends ScenePayload {
  artifacts: Record<string, ArtifactPayload>;
  timeline?: TimelinePayload;
  binding_drifts?: BindingDrift[];
  validation?: ValidationPayload;
}

export interface ApiError {
  status: number;
  detail: string;
}
