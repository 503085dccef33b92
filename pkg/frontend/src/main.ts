// Browser bootstrap: hash routing, polling, event delegation. All rendering
// goes through the pure view modules; this file only wires fetch and DOM.

import { ApiClient, ConflictError } from "./api.js";
import { decodeState, encodeState, ViewState } from "./state.js";
import { escapeHtml } from "./render.js";
import { buildInspectorViewModel, layoutMatchesInspector, renderInspector, renderNotFound } from "./views/inspector.js";
import { renderLineage } from "./views/lineage.js";
import { buildProgressViewModel, renderProgress } from "./views/progress.js";
import { renderIndexTable } from "./views/tables.js";
import { renderWorkbench } from "./views/workbench.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api")
  ?? localStorage.getItem("recital.api")
  ?? `${window.location.protocol}//${window.location.hostname}:8747`;
const token = params.get("token") ?? localStorage.getItem("recital.token") ?? "";
localStorage.setItem("recital.api", apiBase);
if (token) localStorage.setItem("recital.token", token);

const client = new ApiClient(apiBase, token);
const app = document.getElementById("app")!;
let lastGood = "";
let pollTimer: number | undefined;

function currentState(): ViewState {
  return decodeState(window.location.hash);
}

function navigate(state: ViewState): void {
  window.location.hash = encodeState(state);
}

async function renderView(state: ViewState): Promise<string> {
  switch (state.view) {
    case "progress": {
      const progress = await client.progress();
      return renderProgress(buildProgressViewModel(progress));
    }
    case "register":
      return renderIndexTable("register", (await client.registers(0, 200)).items);
    case "page": {
      if (state.selection && /^\d+$/.test(state.selection)) {
        const serial = Number(state.selection);
        try {
          const [page, clusters, transcripts] = await Promise.all([
            client.page(serial),
            client.pageClusters(serial),
            client.pageTranscripts(serial),
          ]);
          const vm = buildInspectorViewModel(page, clusters.items, transcripts.items);
          return renderInspector(vm);
        } catch (err) {
          if ((err as { status?: number }).status === 404) return renderNotFound(serial);
          throw err;
        }
      }
      return renderIndexTable("page", (await client.pages(0, 200)).items);
    }
    case "mark":
      return renderIndexTable("mark", (await client.marks(0, 200, state.volunteer)).items);
    case "transcript":
      return renderIndexTable("transcript", (await client.transcripts(0, 200, state.volunteer)).items);
    case "volunteer": {
      const vols = await client.volunteers();
      const rows = vols.items
        .map(
          (v) =>
            `<tr><td><a href="#/mark?volunteer=${encodeURIComponent(v.volunteer)}">` +
            `${escapeHtml(v.volunteer)}</a></td><td>${v.total}</td></tr>`
        )
        .join("");
      return `<table class="index-table"><thead><tr><th>volunteer</th><th>runs</th></tr></thead>
        <tbody>${rows}</tbody></table>`;
    }
    case "play":
      return renderIndexTable("play", (await client.plays(0, 200)).items);
    case "person":
      return renderIndexTable("person", (await client.persons(0, 200)).items);
    case "show":
      return renderIndexTable("show", (await client.shows(0, 200)).items);
    case "finance":
      return renderIndexTable("finance", (await client.finances(0, 200)).items);
    case "review": {
      const queue = await client.review("pending");
      return renderWorkbench(queue.items);
    }
  }
}

async function refresh(): Promise<void> {
  const state = currentState();
  try {
    const html = await renderView(state);
    lastGood = html;
    app.innerHTML = html;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    app.innerHTML =
      `<div class="banner banner-stale">service unreachable (${escapeHtml(message)}): ` +
      `showing stale data</div>` + lastGood;
  }
  schedulePoll(state);
}

function schedulePoll(state: ViewState): void {
  if (pollTimer !== undefined) window.clearTimeout(pollTimer);
  if (state.poll > 0) {
    pollTimer = window.setTimeout(refresh, state.poll * 1000);
  }
}

async function handleAction(target: HTMLElement): Promise<void> {
  const action = target.dataset.action;
  if (!action) return;
  if (action === "lineage" && target.dataset.key) {
    const graph = await client.lineage(target.dataset.key);
    const panel = document.getElementById("lineage-panel");
    if (panel) panel.innerHTML = renderLineage(graph);
    return;
  }
  if (action === "toggle-layout") {
    const state = currentState();
    if (state.selection) {
      const serial = Number(state.selection);
      const [page, clusters, transcripts, layout] = await Promise.all([
        client.page(serial), client.pageClusters(serial),
        client.pageTranscripts(serial), client.pageLayout(serial),
      ]);
      const vm = buildInspectorViewModel(page, clusters.items, transcripts.items);
      const match = layoutMatchesInspector(vm, layout)
        ? "layout surrogate matches the overlay element for element"
        : "layout surrogate drifted from the overlay";
      const panel = document.getElementById("lineage-panel");
      if (panel) panel.innerHTML = `<p class="surrogate-note">${escapeHtml(match)}</p>`;
    }
    return;
  }
  if (action === "toggle-text") {
    const state = currentState();
    if (state.selection) {
      const text = await client.pageText(Number(state.selection));
      const panel = document.getElementById("lineage-panel");
      if (panel) panel.innerHTML = `<pre class="text-surrogate">${escapeHtml(text.text)}</pre>`;
    }
    return;
  }
  const item = Number(target.dataset.item);
  if (!Number.isFinite(item)) return;
  try {
    if (action === "accept" || action === "reject") {
      await client.resolveReview(item, { action, curator: curatorName() });
    } else if (action === "edit") {
      const text = window.prompt("replacement text (or category for pages):");
      if (text === null) return;
      await client.resolveReview(item, { action: "edit", curator: curatorName(),
                                         text, category: text });
    } else if (action === "choose-entity") {
      const entity = window.prompt("entity key (e.g. domain/canonical_entity/3):");
      if (entity === null) return;
      await client.resolveReview(item, { action: "edit", curator: curatorName(), entity });
    }
    await refresh();
  } catch (err) {
    if (err instanceof ConflictError) {
      const queue = await client.review("pending");
      app.innerHTML = renderWorkbench(queue.items, "someone already resolved that item");
    } else {
      throw err;
    }
  }
}

function curatorName(): string {
  return localStorage.getItem("recital.curator") ?? "curator";
}

app.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.dataset.action) {
    event.preventDefault();
    void handleAction(target);
  } else if (target.closest(".cluster-row")) {
    const row = target.closest(".cluster-row") as HTMLElement;
    row.parentElement?.querySelectorAll(".cluster-selected")
      .forEach((n) => n.classList.remove("cluster-selected"));
    row.classList.add("cluster-selected");
  }
});

window.addEventListener("hashchange", () => void refresh());

const nav = document.getElementById("nav");
if (nav) {
  nav.innerHTML = [
    "progress", "register", "page", "mark", "transcript",
    "volunteer", "play", "show", "person", "finance", "review",
  ]
    .map((v) => `<a href="#/${v}">${v}</a>`)
    .join(" ");
}

void refresh();
