// Small HTML-string helpers shared by the views.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export const TIER_LABELS: Record<string, string> = {
  fully_confident: "fully confident",
  almost_confident: "almost confident",
  questionable: "questionable",
};

export const TIER_CLASSES: Record<string, string> = {
  fully_confident: "tier-full",
  almost_confident: "tier-almost",
  questionable: "tier-questionable",
};

export function tierBadge(tier: string, curatorVerdict?: string): string {
  const cls = TIER_CLASSES[tier] ?? "tier-unknown";
  const label = TIER_LABELS[tier] ?? tier;
  const curator = curatorVerdict
    ? ` <span class="badge badge-curator" title="curator ${escapeHtml(curatorVerdict)}">curator</span>`
    : "";
  return `<span class="badge ${cls}" data-tier="${escapeHtml(tier)}">${escapeHtml(label)}</span>${curator}`;
}

export function formatTimestamp(ms: number): string {
  if (!ms) return "–";
  return new Date(ms).toISOString().replace("T", " ").replace(/\.\d+Z$/, "Z");
}
