// Thin typed client for the review API. Takes an injectable fetch so tests
// can run against recorded fixtures or a live server interchangeably.

import type {
  ApiError,
  SceneDetailPayload,
  ScenePayload,
  Verdict,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class RequestFailed extends Error {
  constructor(public readonly error: ApiError) {
    super(`HTTP ${error.status}: ${error.detail}`);
  }
}

async function unwrap<T>(
  response: Awaited<ReturnType<FetchLike>>,
): Promise<T> {
  const body = (await response.json()) as Record<string, unknown>;
  if (response.status >= 400) {
    throw new RequestFailed({
      status: response.status,
      detail: String(body["detail"] ?? "request failed"),
    });
  }
  return body as T;
}

export class ReviewClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then((r) => unwrap<T>(r));
  }

  async listProjects(): Promise<string[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/projects`);
    const body = (await r.json()) as string[];
    if (r.status >= 400) {
      throw new RequestFailed({ status: r.status, detail: "listing failed" });
    }
    return body;
  }

  async listScenes(projectId: string): Promise<ScenePayload[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/projects/${projectId}/scenes`);
    if (r.status >= 400) {
      const body = (await r.json()) as Record<string, unknown>;
      throw new RequestFailed({
        status: r.status,
        detail: String(body["detail"] ?? "listing failed"),
      });
    }
    return (await r.json()) as ScenePayload[];
  }

  sceneDetail(projectId: string, sceneId: number): Promise<SceneDetailPayload> {
    return this.fetchImpl(
      `${this.baseUrl}/projects/${projectId}/scenes/${sceneId}`,
    ).then((r) => unwrap<SceneDetailPayload>(r));
  }

  submit(projectId: string, sceneId: number, version: number): Promise<ScenePayload> {
    return this.post(`/projects/${projectId}/scenes/${sceneId}/submit`, { version });
  }

  postVerdict(
    projectId: string,
    sceneId: number,
    criterion: string,
    verdict: Verdict,
    note: string,
    version: number,
  ): Promise<ScenePayload> {
    return this.post(`/projects/${projectId}/scenes/${sceneId}/verdict`, {
      criterion,
      verdict,
      note,
      version,
    });
  }

  postRegenerate(
    projectId: string,
    sceneId: number,
    track: string,
    note: string,
    version: number,
  ): Promise<ScenePayload> {
    return this.post(`/projects/${projectId}/scenes/${sceneId}/regenerate`, {
      track,
      note,
      version,
    });
  }
}
