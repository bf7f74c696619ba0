// Dashboard controller. Every mutation posts the scene version it last saw;
// a 200 refetches server state, a 409 raises the conflict banner without
// touching local state, and a 422 is shown inline next to the scene.

import { buildDetailCard, buildSceneCard, type SceneCard } from "./cards.js";
import { RequestFailed, type ReviewClient } from "./client.js";
import type { SceneDetailPayload, Verdict } from "./types.js";

export interface AppState {
  projectId: string;
  cards: SceneCard[];
  detail: SceneCard | null;
  conflictBanner: string | null;
  inlineError: string | null;
}

export class ReviewApp {
  readonly state: AppState;

  constructor(
    private readonly client: ReviewClient,
    projectId: string,
  ) {
    this.state = {
      projectId,
      cards: [],
      detail: null,
      conflictBanner: null,
      inlineError: null,
    };
  }

  async refresh(): Promise<void> {
    const scenes = await this.client.listScenes(this.state.projectId);
    this.state.cards = scenes.map(buildSceneCard);
  }

  async openScene(sceneId: number): Promise<SceneDetailPayload> {
    const detail = await this.client.sceneDetail(this.state.projectId, sceneId);
    this.state.detail = buildDetailCard(detail);
    return detail;
  }

  private version(sceneId: number): number {
    const card = this.state.cards.find((c) => c.sceneId === sceneId);
    if (card === undefined) {
      throw new Error(`scene ${sceneId} is not loaded`);
    }
    return card.version;
  }

  // Runs one mutation with conflict/validation handling. On success the
  // whole list is refetched so the UI always mirrors the server.
  private async mutate(action: () => Promise<unknown>): Promise<boolean> {
    this.state.conflictBanner = null;
    this.state.inlineError = null;
    try {
      await action();
    } catch (err) {
      if (err instanceof RequestFailed && err.error.status === 409) {
        this.state.conflictBanner = err.error.detail;
        return false;
      }
      if (err instanceof RequestFailed && err.error.status === 422) {
        this.state.inlineError = err.error.detail;
        return false;
      }
      throw err;
    }
    await this.refresh();
    return true;
  }

  submit(sceneId: number): Promise<boolean> {
    return this.mutate(() =>
      this.client.submit(this.state.projectId, sceneId, this.version(sceneId)),
    );
  }

  recordVerdict(
    sceneId: number,
    criterion: string,
    verdict: Verdict,
    note = "",
  ): Promise<boolean> {
    return this.mutate(() =>
      this.client.postVerdict(
        this.state.projectId,
        sceneId,
        criterion,
        verdict,
        note,
        this.version(sceneId),
      ),
    );
  }

  regenerate(sceneId: number, track: string, note: string): Promise<boolean> {
    return this.mutate(() =>
      this.client.postRegenerate(
        this.state.projectId,
        sceneId,
        track,
        note,
        this.version(sceneId),
      ),
    );
  }
}
