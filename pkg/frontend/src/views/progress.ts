// Progress view: completeness bars, tier distribution, volunteer table.
// Every number shown comes verbatim from one /api/progress field.

import { escapeHtml, formatTimestamp, TIER_CLASSES, TIER_LABELS } from "../render.js";
import type { ProgressPayload } from "../types.js";

export interface TaskBar {
  task: string;
  done: number;
  total: number;
  completeness: number;        // the API field, untouched
  completenessFrac: string;    // exact rational as reported
  percentLabel: string;        // display formatting of the same field
}

export interface TierSlice {
  tier: string;
  count: number;
}

export interface ProgressViewModel {
  bars: TaskBar[];
  tiers: TierSlice[];
  cookedRecords: number;
  volunteers: ProgressPayload["volunteers"];
}

export function buildProgressViewModel(payload: ProgressPayload): ProgressViewModel {
  const bars = Object.entries(payload.tasks).map(([task, stats]) => ({
    task,
    done: stats.done,
    total: stats.total,
    completeness: stats.completeness,
    completenessFrac: stats.completeness_frac,
    percentLabel: `${(stats.completeness * 100).toFixed(1)}%`,
  }));
  const tiers = Object.entries(payload.tier_distribution).map(([tier, count]) => ({
    tier,
    count,
  }));
  return {
    bars,
    tiers,
    cookedRecords: payload.cooked_records,
    volunteers: payload.volunteers,
  };
}

function donut(tiers: TierSlice[], totalRecords: number): string {
  const total = tiers.reduce((acc, t) => acc + t.count, 0);
  if (total === 0) {
    return `<svg viewBox="0 0 120 120" class="tier-donut"><circle cx="60" cy="60" r="48" fill="none" stroke="#ddd" stroke-width="18"/></svg>`;
  }
  const colors: Record<string, string> = {
    fully_confident: "#2e7d32",
    almost_confident: "#f9a825",
    questionable: "#c62828",
  };
  const circumference = 2 * Math.PI * 48;
  let offset = 0;
  const arcs = tiers
    .filter((t) => t.count > 0)
    .map((t) => {
      const span = (t.count / total) * circumference;
      const arc =
        `<circle cx="60" cy="60" r="48" fill="none" stroke="${colors[t.tier] ?? "#777"}" ` +
        `stroke-width="18" stroke-dasharray="${span.toFixed(2)} ${(circumference - span).toFixed(2)}" ` +
        `stroke-dashoffset="${(-offset).toFixed(2)}" data-tier-slice="${t.tier}" data-count="${t.count}"/>`;
      offset += span;
      return arc;
    })
    .join("");
  return `<svg viewBox="0 0 120 120" class="tier-donut">${arcs}` +
    `<text x="60" y="64" text-anchor="middle" font-size="16">${totalRecords}</text></svg>`;
}

export function renderProgress(vm: ProgressViewModel, staleBanner = false): string {
  const banner = staleBanner
    ? `<div class="banner banner-stale">service unreachable: showing stale data</div>`
    : "";
  const bars = vm.bars
    .map(
      (b) => `
    <div class="task-row" data-task="${b.task}">
      <span class="task-name">${escapeHtml(b.task)}</span>
      <div class="bar"><div class="bar-fill" style="width:${(b.completeness * 100).toFixed(2)}%"></div></div>
      <span class="task-stats" data-done="${b.done}" data-total="${b.total}"
            data-frac="${escapeHtml(b.completenessFrac)}">
        ${b.done}/${b.total} (${b.percentLabel})
      </span>
    </div>`
    )
    .join("");
  const tierLegend = vm.tiers
    .map(
      (t) =>
        `<li class="${TIER_CLASSES[t.tier] ?? ""}" data-tier-count="${t.tier}">` +
        `${escapeHtml(TIER_LABELS[t.tier] ?? t.tier)}: <strong>${t.count}</strong></li>`
    )
    .join("");
  const volunteers = vm.volunteers
    .map(
      (v) => `
      <tr data-volunteer="${escapeHtml(v.volunteer)}">
        <td><a href="#/volunteer?sel=${encodeURIComponent(v.volunteer)}">${escapeHtml(v.volunteer)}</a></td>
        <td>${v.counts.classify ?? 0}</td><td>${v.counts.mark ?? 0}</td>
        <td>${v.counts.transcribe ?? 0}</td><td>${v.counts.verify ?? 0}</td>
        <td>${v.total}</td><td>${formatTimestamp(v.last_activity)}</td>
      </tr>`
    )
    .join("");
  return `
  ${banner}
  <section class="progress-view">
    <h2>Task completeness</h2>
    <div class="bars">${bars}</div>
    <h2>Confidence tiers <small>(${vm.cookedRecords} cooked records)</small></h2>
    <div class="tier-panel">${donut(vm.tiers, vm.cookedRecords)}<ul class="tier-legend">${tierLegend}</ul></div>
    <h2>Volunteer activity</h2>
    <table class="volunteer-table">
      <thead><tr><th>volunteer</th><th>classify</th><th>mark</th><th>transcribe</th>

      <th>verify</th><th>total</th><th>last activity</th></tr></thead>
      <tbody>${volunteers}</tbody>
    </table>
  </section>`;
}
