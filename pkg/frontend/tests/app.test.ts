// Controller tests against a scripted fetch: success refetches, 409 raises
// the conflict banner without mutating cards, 422 is shown inline.

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ReviewApp } from "../src/app.js";
import { ReviewClient, type FetchLike } from "../src/client.js";
import type { ScenePayload } from "../src/types.js";

function fixture<T>(name: string): T {
  const url = new URL(`../fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf8")) as T;
}

const scenes = fixture<ScenePayload[]>("scenes.json");
const conflict = fixture<{ status: number; body: { detail: string } }>(
  "conflict.json",
);

interface Scripted {
  fetch: FetchLike;
  requests: { url: string; method: string; body?: unknown }[];
}

function scriptedFetch(
  responses: Record<string, { status: number; body: unknown } | undefined>,
): Scripted {
  const requests: Scripted["requests"] = [];
  const impl: FetchLike = (url, init) => {
    const method = init?.method ?? "GET";
    requests.push({
      url,
      method,
      body: init?.body === undefined ? undefined : JSON.parse(init.body),
    });
    const scripted = responses[`${method} ${url}`];
    if (scripted === undefined) {
      throw new Error(`unscripted request: ${method} ${url}`);
    }
    return Promise.resolve({
      status: scripted.status,
      json: () => Promise.resolve(scripted.body),
    });
  };
  return { fetch: impl, requests };
}

async function appWith(responses: Parameters<typeof scriptedFetch>[0]) {
  const scripted = scriptedFetch({
    "GET /projects/proj/scenes": { status: 200, body: scenes },
    ...responses,
  });
  const app = new ReviewApp(new ReviewClient("", scripted.fetch), "proj");
  await app.refresh();
  return { app, scripted };
}

describe("ReviewApp", () => {
  it("sends the last-seen version with every mutation", async () => {
    const first = scenes[0]!;
    const { app, scripted } = await appWith({
      [`POST /projects/proj/scenes/${first.scene_id}/submit`]: {
        status: 200,
        body: { ...first, state: "in_review", version: first.version + 1 },
      },
    });
    expect(await app.submit(first.scene_id)).toBe(true);
    const post = scripted.requests.find((r) => r.method === "POST")!;
    expect(post.body).toEqual({ version: first.version });
  });

  it("refetches the list after a successful mutation", async () => {
    const first = scenes[0]!;
    const { app, scripted } = await appWith({
      [`POST /projects/proj/scenes/${first.scene_id}/submit`]: {
        status: 200,
        body: { ...first, state: "in_review", version: first.version + 1 },
      },
    });
    await app.submit(first.scene_id);
    const gets = scripted.requests.filter((r) => r.method === "GET");
    expect(gets).toHaveLength(2); // initial refresh + post-mutation refetch
  });

  it("shows the recorded conflict response as a banner, without state change", async () => {
    const first = scenes[0]!;
    const { app } = await appWith({
      [`POST /projects/proj/scenes/${first.scene_id}/verdict`]: {
        status: conflict.status,
        body: conflict.body,
      },
    });
    const before = structuredClone(app.state.cards);
    const ok = await app.recordVerdict(first.scene_id, "engineering", "pass");
    expect(ok).toBe(false);
    expect(app.state.conflictBanner).toBe(conflict.body.detail);
    expect(app.state.cards).toEqual(before);
  });

  it("shows a 422 inline and clears it on the next successful call", async () => {
    const first = scenes[0]!;
    const { app } = await appWith({
      [`POST /projects/proj/scenes/${first.scene_id}/verdict`]: {
        status: 422,
        body: { detail: "fail verdicts require a reviewer note" },
      },
      [`POST /projects/proj/scenes/${first.scene_id}/submit`]: {
        status: 200,
        body: { ...first, state: "in_review", version: first.version + 1 },
      },
    });
    expect(await app.recordVerdict(first.scene_id, "engineering", "fail")).toBe(false);
    expect(app.state.inlineError).toBe("fail verdicts require a reviewer note");
    expect(app.state.conflictBanner).toBeNull();

    await app.submit(first.scene_id);
    expect(app.state.inlineError).toBeNull();
  });
});
