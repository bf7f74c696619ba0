// String-based HTML rendering for the dashboard. No framework: the app
// swaps innerHTML of a single mount point, so everything here is pure.

import type { SceneCard, TimelineBar } from "./cards.js";
import { CRITERIA } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function pct(fraction: number): string {
  return `${(fraction * 100).toFixed(2)}%`;
}

export function renderBar(bar: TimelineBar): string {
  const classes = ["bar", `bar-${bar.kind}`];
  if (bar.drifted) {
    classes.push("bar-drifted");
  }
  const drift =
    bar.driftS === undefined ? "" : ` data-drift="${bar.driftS.toFixed(3)}"`;
  return (
    `<div class="${classes.join(" ")}" data-id="${escapeHtml(bar.id)}"` +
    `${drift} style="left:${pct(bar.offset)};width:${pct(bar.width)}">` +
    `${escapeHtml(bar.label)}</div>`
  );
}

export function renderCard(card: SceneCard): string {
  const verdicts = CRITERIA.map(
    (c) => `<span class="criterion criterion-${card.criteria[c]}">` +
      `${escapeHtml(c)}: ${card.criteria[c]}</span>`,
  ).join("");
  const findings = Object.entries(card.findingCounts)
    .map(([check, count]) => `<li>${escapeHtml(check)}: ${count}</li>`)
    .join("");
  const versions = Object.entries(card.artifactVersions)
    .map(([track, v]) => `<span class="version">${escapeHtml(track)} v${v}</span>`)
    .join(" ");
  return (
    `<article class="scene-card" data-scene="${card.sceneId}" ` +
    `data-state="${card.state}">` +
    `<h2>Scene ${card.sceneId}</h2>` +
    `<p class="state state-${card.state}">${card.state}</p>` +
    `<p class="versions">${versions}</p>` +
    `<div class="verdicts">${verdicts}</div>` +
    (findings ? `<ul class="findings">${findings}</ul>` : "") +
    `<div class="timeline">${card.bars.map(renderBar).join("")}</div>` +
    `</article>`
  );
}

export function renderConflictBanner(message: string): string {
  return `<div class="banner banner-conflict" role="alert">` +
    `scene changed, reload &mdash; ${escapeHtml(message)}</div>`;
}

export function renderInlineError(message: string): string {
  return `<p class="error-inline">${escapeHtml(message)}</p>`;
}

export function renderList(cards: SceneCard[], banner: string | null,
                           inlineError: string | null): string {
  return (
    (banner !== null ? renderConflictBanner(banner) : "") +
    (inlineError !== null ? renderInlineError(inlineError) : "") +
    `<section class="scene-list">${cards.map(renderCard).join("")}</section>`
  );
}
