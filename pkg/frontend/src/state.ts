// Deep-linkable view state: the whole state round-trips through the
// location hash, so any dashboard view can be bookmarked and shared.

export const INDEXES = [
  "progress", "register", "page", "mark", "transcript",
  "volunteer", "play", "show", "person", "review", "finance",
] as const;

export type IndexName = (typeof INDEXES)[number];

export interface ViewState {
  view: IndexName;
  tier?: string;
  volunteer?: string;
  stage?: string;
  selection?: string;
  poll: number; // seconds; 0 disables polling
}

export const DEFAULT_POLL_SECONDS = 10;

export function defaultState(): ViewState {
  return { view: "progress", poll: DEFAULT_POLL_SECONDS };
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.tier) params.set("tier", state.tier);
  if (state.volunteer) params.set("volunteer", state.volunteer);
  if (state.stage) params.set("stage", state.stage);
  if (state.selection) params.set("sel", state.selection);
  if (state.poll !== DEFAULT_POLL_SECONDS) params.set("poll", String(state.poll));
  const query = params.toString();
  return `#/${state.view}` + (query ? `?${query}` : "");
}

export function decodeState(hash: string): ViewState {
  const state = defaultState();
  const trimmed = hash.replace(/^#\/?/, "");
  if (!trimmed) return state;
  const [view, query] = trimmed.split("?", 2);
  if ((INDEXES as readonly string[]).includes(view)) {
    state.view = view as IndexName;
  }
  const params = new URLSearchParams(query ?? "");
  const tier = params.get("tier");
  if (tier) state.tier = tier;
  const volunteer = params.get("volunteer");
  if (volunteer) state.volunteer = volunteer;
  const stage = params.get("stage");
  if (stage) state.stage = stage;
  const sel = params.get("sel");
  if (sel) state.selection = sel;
  const poll = params.get("poll");
  if (poll !== null && !Number.isNaN(Number(poll))) state.poll = Number(poll);
  return state;
}
