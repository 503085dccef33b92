// Lineage drill-down rendered as a layered DAG: stage columns 0..3 left to
// right, matching the four-stage mental model of the store.

import { escapeHtml } from "../render.js";
import type { LineageGraph } from "../types.js";

export interface LineageColumn {
  stage: number;
  nodes: { key: string; kind: string; external: boolean }[];
}

export function buildLineageColumns(graph: LineageGraph): LineageColumn[] {
  const external = new Set(graph.external_leaves);
  const columns: LineageColumn[] = [0, 1, 2, 3].map((stage) => ({ stage, nodes: [] }));
  for (const node of graph.nodes) {
    columns[node.stage].nodes.push({
      key: node.key,
      kind: node.kind,
      external: external.has(node.key),
    });
  }
  for (const col of columns) {
    col.nodes.sort((a, b) => (a.key < b.key ? -1 : a.key > b.key ? 1 : 0));
  }
  return columns;
}

const STAGE_NAMES = ["crowdsourcing log", "raw chain", "cooked", "domain"];

export function renderLineage(graph: LineageGraph): string {
  const columns = buildLineageColumns(graph);
  const colWidth = 230;
  const rowHeight = 34;
  const maxRows = Math.max(1, ...columns.map((c) => c.nodes.length));
  const width = colWidth * columns.length;
  const height = 40 + rowHeight * maxRows;
  const positions = new Map<string, { x: number; y: number }>();
  const nodeSvg = columns
    .map((col, ci) => {
      const header =
        `<text x="${ci * colWidth + colWidth / 2}" y="18" text-anchor="middle" ` +
        `class="lineage-stage">${STAGE_NAMES[col.stage]}</text>`;
      const nodes = col.nodes
        .map((node, ri) => {
          const x = ci * colWidth + 10;
          const y = 32 + ri * rowHeight;
          positions.set(node.key, { x: x + (colWidth - 30) / 2, y: y + 11 });
          const cls = node.external ? "lineage-node external" : "lineage-node";
          const mark = node.external ? " (external)" : "";
          return (
            `<g class="${cls}" data-key="${escapeHtml(node.key)}">` +
            `<rect x="${x}" y="${y}" width="${colWidth - 30}" height="22" rx="4"/>` +
            `<text x="${x + 6}" y="${y + 15}">${escapeHtml(node.key)}${mark}</text></g>`
          );
        })
        .join("");
      return header + nodes;
    })
    .join("");
  const edgeSvg = graph.edges
    .map((e) => {
      const from = positions.get(e.source);
      const to = positions.get(e.derived);
      if (!from || !to) return "";
      return (
        `<line x1="${from.x}" y1="${from.y}" x2="${to.x}" y2="${to.y}" ` +
        `class="lineage-edge" data-agent="${escapeHtml(e.agent)}"/>`
      );
    })
    .join("");
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="lineage-dag" data-root="${escapeHtml(graph.root)}">` +
    `${edgeSvg}${nodeSvg}</svg>`
  );
}
