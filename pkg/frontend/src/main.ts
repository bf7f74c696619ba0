// Browser entry point: mounts the dashboard onto #app and wires clicks.

import { ReviewApp } from "./app.js";
import { ReviewClient, type FetchLike } from "./client.js";
import { renderList } from "./render.js";

export async function mount(
  root: HTMLElement,
  baseUrl: string,
  fetchImpl: FetchLike = fetch.bind(globalThis) as FetchLike,
): Promise<ReviewApp> {
  const client = new ReviewClient(baseUrl, fetchImpl);
  const projects = await client.listProjects();
  const app = new ReviewApp(client, projects[0] ?? "");
  const draw = () => {
    root.innerHTML = renderList(
      app.state.cards,
      app.state.conflictBanner,
      app.state.inlineError,
    );
  };
  await app.refresh();
  draw();
  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const card = target.closest<HTMLElement>(".scene-card");
    if (card === null) {
      return;
    }
    const sceneId = Number(card.dataset["scene"]);
    void app.openScene(sceneId).then(draw);
  });
  return app;
}

const container = typeof document === "undefined"
  ? null
  : document.getElementById("app");
if (container !== null) {
  void mount(container, "");
}
