import { describe, expect, it } from "vitest";

import { tierBadge } from "../src/render.js";
import type {
  ClusterRecord,
  CookedTranscriptRecord,
  LayoutDocument,
  LineageGraph,
  PageRecord,
  ProgressPayload,
  ReviewItem,
} from "../src/types.js";
import {
  buildInspectorViewModel,
  layoutMatchesInspector,
  renderInspector,
  renderNotFound,
} from "../src/views/inspector.js";
import { buildLineageColumns, renderLineage } from "../src/views/lineage.js";
import { buildProgressViewModel, renderProgress } from "../src/views/progress.js";
import { renderIndexTable } from "../src/views/tables.js";
import { renderWorkbench } from "../src/views/workbench.js";

const progressFixture: ProgressPayload = {
  tasks: {
    classify: { done: 3, total: 6, completeness: 0.5, completeness_frac: "1/2" },
    mark: { done: 6, total: 6, completeness: 1.0, completeness_frac: "1" },
    transcribe: { done: 0, total: 12, completeness: 0.0, completeness_frac: "0" },
    verify: { done: 0, total: 0, completeness: 0.0, completeness_frac: "0" },
  },
  tier_distribution: { fully_confident: 7, almost_confident: 2, questionable: 1 },
  cooked_records: 10,
  volunteers: [
    { volunteer: "vol-01", counts: { classify: 3, mark: 6, transcribe: 0, verify: 0 },
      total: 9, last_activity: 1577836800000 },
  ],
};

describe("progress view", () => {
  it("maps every payload field without recomputation", () => {
    const vm = buildProgressViewModel(progressFixture);
    for (const [task, stats] of Object.entries(progressFixture.tasks)) {
      const bar = vm.bars.find((b) => b.task === task)!;
      expect(bar.done).toBe(stats.done);
      expect(bar.total).toBe(stats.total);
      expect(bar.completeness).toBe(stats.completeness);
      expect(bar.completenessFrac).toBe(stats.completeness_frac);
    }
    for (const [tier, count] of Object.entries(progressFixture.tier_distribution)) {
      expect(vm.tiers.find((t) => t.tier === tier)!.count).toBe(count);
    }
    expect(vm.cookedRecords).toBe(progressFixture.cooked_records);
    expect(vm.volunteers).toBe(progressFixture.volunteers);
  });

  it("renders bars, tier counts and volunteers with data attributes", () => {
    const html = renderProgress(buildProgressViewModel(progressFixture));
    expect(html).toContain('data-task="classify"');
    expect(html).toContain('data-done="3"');
    expect(html).toContain('data-frac="1/2"');
    expect(html).toContain("3/6 (50.0%)");
    expect(html).toContain('data-tier-count="questionable"');
    expect(html).toContain("<strong>1</strong>");
    expect(html).toContain('data-volunteer="vol-01"');
  });

  it("shows a stale banner when asked", () => {
    const html = renderProgress(buildProgressViewModel(progressFixture), true);
    expect(html).toContain("banner-stale");
  });
});

const pageFixture: PageRecord = {
  key: "raw/page/1", serial: 1, register: "raw/register/1", seq: 1,
  image_ref: "img/p1.jpg", aspect: 0.72,
};
const clustersFixture: ClusterRecord[] = [
  { key: "cooked/mark_cluster/1", serial: 1, page: "raw/page/1",
    members: ["raw/mark/1"], box: [0.08, 0.05, 0.5, 0.14], tag: "date", n_annotators: 3 },
  { key: "cooked/mark_cluster/2", serial: 2, page: "raw/page/1",
    members: ["raw/mark/2"], box: [0.08, 0.23, 0.5, 0.14], tag: "play", n_annotators: 3 },
];
const transcriptsFixture: CookedTranscriptRecord[] = [
  { key: "cooked/cooked_transcript/1", serial: 1, cluster: "cooked/mark_cluster/1",
    page: "raw/page/1", tag: "date", consensus_text: "12/4/44", normalized_text: "12/4/44",
    agreement: 1, agreement_frac: "1", n_votes: 9, tier: "fully_confident" },
  { key: "cooked/cooked_transcript/2", serial: 2, cluster: "cooked/mark_cluster/2",
    page: "raw/page/1", tag: "play", consensus_text: "Timon", normalized_text: "timon",
    agreement: 0.5, agreement_frac: "1/2", n_votes: 2, tier: "questionable",
    curator_verdict: "accepted" },
];

describe("page inspector", () => {
  it("builds one overlay box per cluster with the cooked fields", () => {
    const vm = buildInspectorViewModel(pageFixture, clustersFixture, transcriptsFixture);
    expect(vm.boxes).toHaveLength(2);
    expect(vm.boxes[0].text).toBe("12/4/44");
    expect(vm.boxes[0].tier).toBe("fully_confident");
    expect(vm.boxes[1].agreementFrac).toBe("1/2");
    expect(vm.aspect).toBe(0.72);
  });

  it("renders every cluster once with tier classes and lineage buttons", () => {
    const vm = buildInspectorViewModel(pageFixture, clustersFixture, transcriptsFixture);
    const html = renderInspector(vm, "cooked/mark_cluster/2");
    expect(html.match(/overlay-box/g)).toHaveLength(2);
    expect(html).toContain("overlay-box fully_confident");
    expect(html).toContain("overlay-box questionable overlay-selected");
    expect(html.match(/data-action="lineage"/g)).toHaveLength(2);
    expect(html).toContain("badge-curator");
  });

  it("matches the layout surrogate element for element", () => {
    const vm = buildInspectorViewModel(pageFixture, clustersFixture, transcriptsFixture);
    const layout: LayoutDocument = {
      page: "raw/page/1", aspect: 0.72, generated_at: 0, config_digest: "x",
      elements: [
        { box: [0.08, 0.05, 0.5, 0.14], text: "12/4/44", tier: "fully_confident",
          cluster: "cooked/mark_cluster/1" },
        { box: [0.08, 0.23, 0.5, 0.14], text: "Timon", tier: "questionable",
          cluster: "cooked/mark_cluster/2" },
      ],
    };
    expect(layoutMatchesInspector(vm, layout)).toBe(true);
    layout.elements[0].box = [0.09, 0.05, 0.5, 0.14];
    expect(layoutMatchesInspector(vm, layout)).toBe(false);
  });

  it("renders a not-found view", () => {
    expect(renderNotFound(99)).toContain("No such page: 99");
  });
});

describe("lineage DAG", () => {
  const graph: LineageGraph = {
    root: "cooked/cooked_transcript/1",
    nodes: [
      { key: "cooked/cooked_transcript/1", stage: 2, kind: "cooked_transcript", payload: {} },
      { key: "raw/transcript/1", stage: 1, kind: "transcript", payload: {} },
      { key: "cs/classification/5", stage: 0, kind: "classification", payload: {} },
      { key: "domain/canonical_entity/1", stage: 3, kind: "canonical_entity", payload: {} },
    ],
    edges: [
      { derived: "cooked/cooked_transcript/1", source: "raw/transcript/1", activity: 2, agent: "algo:cook/1" },
      { derived: "raw/transcript/1", source: "cs/classification/5", activity: 1, agent: "vol-01" },
    ],
    external_leaves: ["domain/canonical_entity/1"],
  };

  it("lays out stage columns left to right", () => {
    const columns = buildLineageColumns(graph);
    expect(columns.map((c) => c.stage)).toEqual([0, 1, 2, 3]);
    expect(columns[0].nodes[0].key).toBe("cs/classification/5");
    expect(columns[3].nodes[0].external).toBe(true);
  });

  it("renders nodes and edges", () => {
    const svg = renderLineage(graph);
    expect(svg.match(/lineage-node/g)!.length).toBeGreaterThanOrEqual(4);
    expect(svg.match(/lineage-edge/g)).toHaveLength(2);
    expect(svg).toContain('data-agent="vol-01"');
    expect(svg).toContain("(external)");
  });
});

describe("review workbench", () => {
  const items: ReviewItem[] = [
    { id: 1, target: "cooked/cooked_transcript/7", reason: "questionable_tier",
      status: "pending", created_at: 0, curator: null, superseding: null },
    { id: 2, target: "domain/link_decision/3", reason: "link_needs_review",
      status: "pending", created_at: 0, curator: null, superseding: null },
  ];

  it("renders one row per pending item with actions", () => {
    const html = renderWorkbench(items);
    expect(html.match(/review-row/g)).toHaveLength(2);
    expect(html.match(/data-action="accept"/g)).toHaveLength(2);
    expect(html).toContain('data-action="choose-entity"');
  });

  it("shows the conflict banner with a refresh prompt", () => {
    const html = renderWorkbench(items, "someone already resolved that item");
    expect(html).toContain("banner-conflict");
    expect(html).toContain("refresh the queue");
  });

  it("handles an empty queue", () => {
    expect(renderWorkbench([])).toContain("nothing pending");
  });
});

describe("index tables and badges", () => {
  it("renders records with tier badges when present", () => {
    const html = renderIndexTable("show", [
      { key: "domain/show/1", serial: 1, date: "1744-04-12", pages: ["raw/page/1"],
        plays: ["domain/canonical_entity/1"] },
    ]);
    expect(html).toContain("domain/show/1");
    expect(html).toContain("1744-04-12");
  });

  it("tier badge carries tier and curator markers", () => {
    expect(tierBadge("questionable")).toContain('data-tier="questionable"');
    expect(tierBadge("fully_confident", "edited")).toContain("badge-curator");
  });
});
