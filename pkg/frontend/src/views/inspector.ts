// Page inspector: consensus boxes and transcripts overlaid on the page image
// (or a blank canvas at the page's aspect ratio), tier-coded, with a lineage
// drill-down per cluster.

import { escapeHtml, tierBadge } from "../render.js";
import type {
  ClusterRecord,
  CookedTranscriptRecord,
  LayoutDocument,
  PageRecord,
} from "../types.js";

export interface OverlayBox {
  cluster: string;
  box: [number, number, number, number];
  tag: string;
  nAnnotators: number;
  text: string;
  tier: string;
  agreementFrac: string;
  nVotes: number;
  curatorVerdict?: string;
  transcriptKey?: string;
}

export interface InspectorViewModel {
  page: string;
  serial: number;
  imageRef: string;
  aspect: number;
  boxes: OverlayBox[];
}

export function buildInspectorViewModel(
  page: PageRecord,
  clusters: ClusterRecord[],
  transcripts: CookedTranscriptRecord[],
): InspectorViewModel {
  const byCluster = new Map(transcripts.map((t) => [t.cluster, t]));
  const boxes = clusters.map((c) => {
    const ct = byCluster.get(c.key);
    return {
      cluster: c.key,
      box: c.box,
      tag: c.tag,
      nAnnotators: c.n_annotators,
      text: ct?.consensus_text ?? "",
      tier: ct?.tier ?? "questionable",
      agreementFrac: ct?.agreement_frac ?? "0",
      nVotes: ct?.n_votes ?? 0,
      curatorVerdict: ct?.curator_verdict,
      transcriptKey: ct?.key,
    };
  });
  return {
    page: page.key,
    serial: page.serial,
    imageRef: page.image_ref,
    aspect: page.aspect || 0.75,
    boxes,
  };
}

// The layout surrogate document must reproduce the inspector's overlay
// element for element; the toggle swaps data sources, not geometry.
export function layoutMatchesInspector(vm: InspectorViewModel, layout: LayoutDocument): boolean {
  if (layout.elements.length !== vm.boxes.length) return false;
  const byCluster = new Map(vm.boxes.map((b) => [b.cluster, b]));
  return layout.elements.every((el) => {
    const box = byCluster.get(el.cluster);
    return (
      box !== undefined &&
      el.box.length === 4 &&
      el.box.every((v, i) => v === box.box[i]) &&
      el.text === box.text &&
      el.tier === box.tier
    );
  });
}

export function renderInspector(vm: InspectorViewModel, selection?: string): string {
  const width = 800;
  const height = Math.round(width / vm.aspect);
  const image = vm.imageRef
    ? `<image href="${escapeHtml(vm.imageRef)}" x="0" y="0" width="${width}" height="${height}" ` +
      `preserveAspectRatio="none" onerror="this.remove()"/>`
    : "";
  const rects = vm.boxes
    .map((b) => {
      const [x, y, w, h] = b.box;
      const selected = b.cluster === selection ? " overlay-selected" : "";
      return (
        `<g class="overlay-box ${b.tier}${selected}" data-cluster="${escapeHtml(b.cluster)}">` +
        `<rect x="${(x * width).toFixed(1)}" y="${(y * height).toFixed(1)}" ` +
        `width="${(w * width).toFixed(1)}" height="${(h * height).toFixed(1)}"/>` +
        `<text x="${(x * width + 4).toFixed(1)}" y="${(y * height + 14).toFixed(1)}">` +
        `${escapeHtml(b.text)}</text></g>`
      );
    })
    .join("");
  const panel = vm.boxes
    .map((b) => {
      const selected = b.cluster === selection ? " cluster-selected" : "";
      return `
      <li class="cluster-row${selected}" data-cluster="${escapeHtml(b.cluster)}">
        <code>${escapeHtml(b.cluster)}</code>
        <span class="tag">${escapeHtml(b.tag)}</span>
        <span class="text">${escapeHtml(b.text)}</span>
        ${tierBadge(b.tier, b.curatorVerdict)}
        <span class="stats">agreement ${escapeHtml(b.agreementFrac)}, ${b.nVotes} votes,
          ${b.nAnnotators} annotators</span>
        <button data-action="lineage" data-key="${escapeHtml(b.transcriptKey ?? b.cluster)}">lineage</button>
      </li>`;
    })
    .join("");
  return `
  <section class="inspector" data-page="${escapeHtml(vm.page)}">
    <h2>Page ${vm.serial} <small>${escapeHtml(vm.imageRef || "no image: blank canvas")}</small></h2>
    <div class="inspector-columns">
      <svg viewBox="0 0 ${width} ${height}" class="page-canvas">
        <rect x="0" y="0" width="${width}" height="${height}" class="page-background"/>
        ${image}${rects}
      </svg>
      <ol class="cluster-panel">${panel}</ol>
    </div>
    <div class="surrogate-toggle">
      <button data-action="toggle-layout">layout surrogate</button>
      <button data-action="toggle-text">text surrogate</button>
    </div>
    <div id="lineage-panel"></div>
  </section>`;
}

export function renderNotFound(serial: number): string {
  return `<section class="not-found"><h2>No such page: ${serial}</h2></section>`;
}
