// Index browsing: one sortable-by-the-API table per entity kind.

import { escapeHtml, tierBadge } from "../render.js";
import type { StoredRecord } from "../types.js";

export interface ColumnSpec {
  header: string;
  field: string;
  render?: (value: unknown, record: StoredRecord) => string;
}

const code = (v: unknown) => `<code>${escapeHtml(String(v ?? ""))}</code>`;

export const INDEX_COLUMNS: Record<string, ColumnSpec[]> = {
  register: [
    { header: "key", field: "key", render: code },
    { header: "label", field: "label" },
    { header: "pages", field: "page_count" },
    { header: "years", field: "year_span", render: (v) => escapeHtml(JSON.stringify(v ?? "")) },
  ],
  page: [
    { header: "key", field: "key", render: code },
    { header: "register", field: "register", render: code },
    { header: "seq", field: "seq" },
    { header: "image", field: "image_ref" },
  ],
  mark: [
    { header: "key", field: "key", render: code },
    { header: "page", field: "page", render: code },
    { header: "tag", field: "tag" },
    { header: "volunteer", field: "volunteer" },
  ],
  transcript: [
    { header: "key", field: "key", render: code },
    { header: "mark", field: "mark", render: code },
    { header: "text", field: "text" },
    { header: "volunteer", field: "volunteer" },
  ],
  play: [
    { header: "key", field: "key", render: code },
    { header: "name", field: "canonical_name" },
    { header: "aliases", field: "aliases", render: (v) => escapeHtml((v as string[] ?? []).join(", ")) },
  ],
  person: [
    { header: "key", field: "key", render: code },
    { header: "name", field: "canonical_name" },
    { header: "role", field: "role" },
  ],
  show: [
    { header: "key", field: "key", render: code },
    { header: "date", field: "date", render: (v) => escapeHtml(String(v ?? "undated")) },
    { header: "pages", field: "pages", render: (v) => String((v as unknown[] ?? []).length) },
    { header: "plays", field: "plays", render: (v) => String((v as unknown[] ?? []).length) },
  ],
  finance: [
    { header: "key", field: "key", render: code },
    { header: "label", field: "label" },
    { header: "livres", field: "livres" },
    { header: "sols", field: "sols" },
    { header: "deniers", field: "deniers" },
    { header: "total deniers", field: "total_deniers" },
  ],
};

export function renderIndexTable(kind: string, records: StoredRecord[]): string {
  const columns = INDEX_COLUMNS[kind];
  if (!columns) return `<p class="empty">unknown index: ${escapeHtml(kind)}</p>`;
  const head = columns.map((c) => `<th>${escapeHtml(c.header)}</th>`).join("");
  const rows = records
    .map((r) => {
      const tds = columns
        .map((c) => {
          const value = r[c.field];
          const cell = c.render ? c.render(value, r) : escapeHtml(String(value ?? ""));
          return `<td>${cell}</td>`;
        })
        .join("");
      const tier = typeof r.tier === "string" ? `<td>${tierBadge(r.tier)}</td>` : "";
      return `<tr data-key="${escapeHtml(r.key)}">${tds}${tier}</tr>`;
    })
    .join("");
  const tierHead = records.some((r) => typeof r.tier === "string") ? "<th>tier</th>" : "";
  return `
  <table class="index-table" data-kind="${escapeHtml(kind)}">
    <thead><tr>${head}${tierHead}</tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}
