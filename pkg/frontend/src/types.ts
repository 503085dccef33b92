// Payload shapes of the workshop REST API.

export interface TaskProgress {
  done: number;
  total: number;
  completeness: number;
  completeness_frac: string;
}

export interface VolunteerActivity {
  volunteer: string;
  counts: Record<string, number>;
  total: number;
  last_activity: number;
}

export interface ProgressPayload {
  tasks: Record<string, TaskProgress>;
  tier_distribution: Record<string, number>;
  cooked_records: number;
  volunteers: VolunteerActivity[];
}

export interface Listing<T> {
  items: T[];
  offset: number;
  limit: number;
  total: number;
}

export interface StoredRecord {
  key: string;
  serial: number;
  superseded_by?: string | null;
  resolved_from?: string;
  [field: string]: unknown;
}

export interface PageRecord extends StoredRecord {
  register: string;
  seq: number;
  image_ref: string;
  aspect: number;
}

export interface ClusterRecord extends StoredRecord {
  page: string;
  members: string[];
  box: [number, number, number, number];
  tag: string;
  n_annotators: number;
}

export interface CookedTranscriptRecord extends StoredRecord {
  cluster: string;
  page: string;
  tag: string;
  consensus_text: string;
  normalized_text: string;
  agreement: number;
  agreement_frac: string;
  n_votes: number;
  tier: string;
  curator_verdict?: string;
}

export interface LayoutElement {
  box: [number, number, number, number];
  text: string;
  tier: string;
  cluster: string;
}

export interface LayoutDocument {
  page: string;
  aspect: number;
  elements: LayoutElement[];
  generated_at: number;
  config_digest: string;
}

export interface LineageNode {
  key: string;
  stage: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface LineageEdge {
  derived: string;
  source: string;
  activity: number;
  agent: string;
}

export interface LineageGraph {
  root: string;
  nodes: LineageNode[];
  edges: LineageEdge[];
  external_leaves: string[];
}

export interface ReliabilityPayload {
  record: string;
  volunteers: number;
  algorithm_activities: number;
  curator_touched: boolean;
  tier: string | null;
}

export interface ReviewItem {
  id: number;
  target: string;
  reason: string;
  status: string;
  created_at: number;
  curator: string | null;
  superseding: string | null;
}

export interface ResolveBody {
  action: "accept" | "reject" | "edit";
  curator?: string;
  text?: string;
  category?: string;
  entity?: string;
}

export interface SnapshotPayload {
  counts: Record<string, Record<string, number>>;
  digests: Record<string, string>;
}
