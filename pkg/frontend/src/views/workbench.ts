// Review workbench: the pending queue and its resolve actions. Every action
// goes through POST /api/review/{id}; the client holds no mutable copy.

import { escapeHtml, formatTimestamp } from "../render.js";
import type { ReviewItem } from "../types.js";

export function renderWorkbench(items: ReviewItem[], conflictMessage?: string): string {
  const banner = conflictMessage
    ? `<div class="banner banner-conflict">${escapeHtml(conflictMessage)} — refresh the queue</div>`
    : "";
  if (items.length === 0) {
    return `${banner}<section class="workbench"><h2>Review queue</h2>
      <p class="empty">nothing pending</p></section>`;
  }
  const rows = items
    .map(
      (item) => `
    <tr class="review-row" data-item="${item.id}" data-reason="${escapeHtml(item.reason)}">
      <td>${item.id}</td>
      <td><a href="#/page?sel=${encodeURIComponent(item.target)}"><code>${escapeHtml(item.target)}</code></a></td>
      <td>${escapeHtml(item.reason)}</td>
      <td>${formatTimestamp(item.created_at)}</td>
      <td class="actions">
        <button data-action="accept" data-item="${item.id}">accept</button>
        <button data-action="reject" data-item="${item.id}">reject</button>
        <button data-action="edit" data-item="${item.id}">edit…</button>
        ${item.reason === "link_needs_review"
          ? `<button data-action="choose-entity" data-item="${item.id}">choose entity…</button>`
          : ""}
      </td>
    </tr>`
    )
    .join("");
  return `${banner}
  <section class="workbench">
    <h2>Review queue <small>${items.length} pending</small></h2>
    <table class="review-table">
      <thead><tr><th>id</th><th>target</th><th>reason</th><th>created</th><th>actions</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
  </section>`;
}
