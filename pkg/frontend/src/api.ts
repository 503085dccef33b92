// Thin typed client over the workshop REST API. The dashboard displays what
// the API returns and never recomputes agreement, tiers or counts.

import type {
  ClusterRecord,
  CookedTranscriptRecord,
  LayoutDocument,
  LineageGraph,
  Listing,
  PageRecord,
  ProgressPayload,
  ReliabilityPayload,
  ResolveBody,
  ReviewItem,
  SnapshotPayload,
  StoredRecord,
  VolunteerActivity,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
  }
}

export class ConflictError extends ApiError {}

async function parseError(res: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body?.detail?.code) {
      code = body.detail.code;
      message = body.detail.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  const cls = res.status === 409 ? ConflictError : ApiError;
  return new cls(res.status, code, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string, readonly curatorToken: string = "") {}

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    const u = new URL(path, this.baseUrl);
    for (const [k, v] of Object.entries(params ?? {})) {
      if (v !== undefined) u.searchParams.set(k, String(v));
    }
    return u.toString();
  }

  private async get<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    const res = await fetch(this.url(path, params));
    if (!res.ok) throw await parseError(res);
    return res.json() as Promise<T>;
  }

  progress(): Promise<ProgressPayload> {
    return this.get("/api/progress");
  }

  snapshot(): Promise<SnapshotPayload> {
    return this.get("/api/snapshot");
  }

  registers(offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get("/api/registers", { offset, limit });
  }

  registerPages(serial: number, offset = 0, limit = 100): Promise<Listing<PageRecord>> {
    return this.get(`/api/registers/${serial}/pages`, { offset, limit });
  }

  pages(offset = 0, limit = 100): Promise<Listing<PageRecord>> {
    return this.get("/api/pages", { offset, limit });
  }

  page(serial: number): Promise<PageRecord> {
    return this.get(`/api/pages/${serial}`);
  }

  pageClusters(serial: number): Promise<Listing<ClusterRecord>> {
    return this.get(`/api/pages/${serial}/clusters`, { limit: 1000 });
  }

  pageTranscripts(serial: number, tier?: string): Promise<Listing<CookedTranscriptRecord>> {
    return this.get(`/api/pages/${serial}/transcripts`, { limit: 1000, tier });
  }

  pageLayout(serial: number): Promise<LayoutDocument> {
    return this.get(`/api/pages/${serial}/surrogate`, { mode: "layout" });
  }

  pageText(serial: number): Promise<{ page: string; text: string }> {
    return this.get(`/api/pages/${serial}/surrogate`, { mode: "text" });
  }

  marks(offset = 0, limit = 100, volunteer?: string): Promise<Listing<StoredRecord>> {
    return this.get("/api/marks", { offset, limit, volunteer });
  }

  transcripts(offset = 0, limit = 100, volunteer?: string): Promise<Listing<StoredRecord>> {
    return this.get("/api/transcripts", { offset, limit, volunteer });
  }

  cookedTranscript(serial: number): Promise<CookedTranscriptRecord> {
    return this.get(`/api/cooked/transcripts/${serial}`);
  }

  cookedTranscripts(offset = 0, limit = 100, tier?: string): Promise<Listing<CookedTranscriptRecord>> {
    return this.get("/api/cooked/transcripts", { offset, limit, tier });
  }

  shows(offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get("/api/shows", { offset, limit });
  }

  show(serial: number): Promise<StoredRecord & { entries: StoredRecord[] }> {
    return this.get(`/api/shows/${serial}`);
  }

  plays(offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get("/api/plays", { offset, limit });
  }

  persons(offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get("/api/persons", { offset, limit });
  }

  links(offset = 0, limit = 100, status?: string): Promise<Listing<StoredRecord>> {
    return this.get("/api/links", { offset, limit, status });
  }

  finances(offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get("/api/finances", { offset, limit });
  }

  volunteers(): Promise<{ items: VolunteerActivity[] }> {
    return this.get("/api/volunteers");
  }

  volunteerActivity(id: string, offset = 0, limit = 100): Promise<Listing<StoredRecord>> {
    return this.get(`/api/volunteers/${id}/activity`, { offset, limit });
  }

  review(status?: string, reason?: string, limit = 1000): Promise<Listing<ReviewItem>> {
    return this.get("/api/review", { status, reason, limit });
  }

  reviewItem(id: number): Promise<ReviewItem & { target_record: StoredRecord }> {
    return this.get(`/api/review/${id}`);
  }

  lineage(key: string): Promise<LineageGraph> {
    return this.get(`/api/lineage/${key}`);
  }

  reliability(key: string): Promise<ReliabilityPayload> {
    return this.get(`/api/reliability/${key}`);
  }

  async resolveReview(id: number, body: ResolveBody): Promise<{ id: number; status: string; superseding: string }> {
    const res = await fetch(this.url(`/api/review/${id}`), {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        ...(this.curatorToken ? { "X-Curator-Token": this.curatorToken } : {}),
      },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return res.json();
  }
}
