"""Stage-2 post-processing: clustering, consensus, confidence tiers.

Marks of a page are grouped by single-linkage IoU clustering; the transcripts
attached to a cluster's members (plus their verifications) vote on a
consensus text; agreement and vote counts drive the three-way confidence
partition. Every cooked record stores the thresholds that produced it, and
output order depends only on record content, never on ingest order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from recital.config import Config
from recital.metrics import box_iou, similarity
from recital.store import RecordId, Stage, Store
from recital.textnorm import AbbreviationTable, normalize
from recital.util import now_ms

ALGO_AGENT = "algo:cook/1"


class Tier(str, Enum):
    FULLY_CONFIDENT = "fully_confident"
    ALMOST_CONFIDENT = "almost_confident"
    QUESTIONABLE = "questionable"


TIER_RANK = {Tier.QUESTIONABLE: 0, Tier.ALMOST_CONFIDENT: 1, Tier.FULLY_CONFIDENT: 2}


@dataclass(frozen=True)
class TierThresholds:
    full_min_votes: int = 3
    full_min_agreement: Fraction = Fraction(2, 3)
    almost_min_votes: int = 2
    almost_min_agreement: Fraction = Fraction(1, 2)

    @classmethod
    def from_config(cls, config: Config) -> "TierThresholds":
        return cls(
            full_min_votes=config.get_int("cook.tier.full.min_votes"),
            full_min_agreement=config.get_fraction("cook.tier.full.min_agreement"),
            almost_min_votes=config.get_int("cook.tier.almost.min_votes"),
            almost_min_agreement=config.get_fraction("cook.tier.almost.min_agreement"),
        )

    def as_payload(self) -> dict:
        return {
            "full": [str(self.full_min_votes), str(self.full_min_agreement)],
            "almost": [str(self.almost_min_votes), str(self.almost_min_agreement)],
        }


def tier_rule(n_votes: int, agreement: Fraction, winning_class_exact: bool,
              t: TierThresholds = TierThresholds()) -> Tier:
    if n_votes >= t.full_min_votes and agreement >= t.full_min_agreement and winning_class_exact:
        return Tier.FULLY_CONFIDENT
    if n_votes >= t.almost_min_votes and agreement >= t.almost_min_agreement:
        return Tier.ALMOST_CONFIDENT
    return Tier.QUESTIONABLE


# -- mark clustering -----------------------------------------------------------

@dataclass
class ClusterDraft:
    member_serials: list[int]          # serials of member marks, ascending
    members: list[str]                 # mark record keys
    consensus_box: list[float]
    tag: str
    n_annotators: int
    nat_key: str                       # source classification id of first member


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def lower_median(values: list) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def cluster_marks(marks: list[tuple[RecordId, dict]], tau: Fraction | float) -> list[ClusterDraft]:
    """Single-linkage connected components of the IoU >= tau graph.

    The result partitions the page's marks and does not depend on input
    order: components are keyed by their lowest member serial.
    """
    if not marks:
        return []
    ordered = sorted(marks, key=lambda m: m[0].serial)
    boxes = [tuple(p["box"]) for _, p in ordered]
    uf = _UnionFind(len(ordered))
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if box_iou(boxes[i], boxes[j]) >= tau:
                uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(len(ordered)):
        groups.setdefault(uf.find(i), []).append(i)
    drafts = []
    for root in sorted(groups):
        idxs = groups[root]
        members = [ordered[i] for i in idxs]
        box = [lower_median([b[k] for b in (boxes[i] for i in idxs)]) for k in range(4)]
        tags = sorted({p["tag"] for _, p in members})
        tag_counts = {t: sum(1 for _, p in members if p["tag"] == t) for t in tags}
        best = max(tag_counts.values())
        tag = min(t for t, c in tag_counts.items() if c == best)
        drafts.append(ClusterDraft(
            member_serials=[rid.serial for rid, _ in members],
            members=[rid.key for rid, _ in members],
            consensus_box=box,
            tag=tag,
            n_annotators=len({p["volunteer"] for _, p in members}),
            nat_key=members[0][1]["source"],
        ))
    return drafts


# -- transcript consensus --------------------------------------------------------

@dataclass(frozen=True)
class Vote:
    kind: str            # transcript | accept | reject
    text: str            # raw string ("" for rejects)
    normalized: str
    volunteer: str
    at: int
    source: str          # classification external id


def votes_for_transcripts(transcripts: list[dict], table: AbbreviationTable) -> list[Vote]:
    """One vote per transcript, one per verify-accept (the verifier endorses
    the transcript's text), and a class-less denominator vote per reject."""
    votes: list[Vote] = []
    for t in transcripts:
        norm = normalize(t["text"], table)
        votes.append(Vote("transcript", t["text"], norm, t["volunteer"], t["at"], t["source"]))
        for v in t.get("verifications", []):
            if v["verdict"] == "accept":
                votes.append(Vote("accept", t["text"], norm, v["volunteer"], v["at"], v["source"]))
            else:
                votes.append(Vote("reject", "", "", v["volunteer"], v["at"], v["source"]))
    return votes


@dataclass
class ConsensusResult:
    consensus_text: str
    normalized_text: str
    agreement: Fraction
    n_votes: int
    winning_class_exact: bool
    tier: Tier
    n_transcripts: int
    n_accepts: int
    n_rejects: int
    classes: list[list[str]] = field(default_factory=list)  # normalized strings per class


def consensus_classes(normalized_strings: list[str], theta: Fraction | float) -> list[list[str]]:
    """Single-linkage classes over distinct normalized strings."""
    uniques = sorted(set(normalized_strings))
    uf = _UnionFind(len(uniques))
    for i in range(len(uniques)):
        for j in range(i + 1, len(uniques)):
            if similarity(uniques[i], uniques[j]) >= theta:
                uf.union(i, j)
    groups: dict[int, list[str]] = {}
    for i, s in enumerate(uniques):
        groups.setdefault(uf.find(i), []).append(s)
    return [groups[r] for r in sorted(groups)]


def consensus_transcript(votes: list[Vote], theta: Fraction | float,
                         thresholds: TierThresholds = TierThresholds()) -> ConsensusResult:
    """Resolve one cluster's votes to a consensus text, agreement and tier.

    Deterministic under any permutation of the votes: ties go to the class
    holding the earliest-timestamped transcript, then to the lexicographically
    smallest raw string.
    """
    if not any(v.kind == "transcript" for v in votes):
        raise ValueError("consensus requires at least one transcript vote")
    total = len(votes)
    class_votes = [v for v in votes if v.kind != "reject"]
    classes = consensus_classes([v.normalized for v in class_votes], theta)
    by_norm: dict[str, list[Vote]] = {}
    for v in class_votes:
        by_norm.setdefault(v.normalized, []).append(v)

    def class_stats(cls_strings: list[str]):
        members = [v for s in cls_strings for v in by_norm[s]]
        weight = len(members)
        transcripts = [v for v in members if v.kind == "transcript"]
        earliest = min((v.at, v.source) for v in transcripts) if transcripts else (float("inf"), "")
        return weight, earliest, members

    best = None
    for cls_strings in classes:
        weight, earliest, members = class_stats(cls_strings)
        rank = (-weight, earliest)
        if best is None or rank < best[0]:
            best = (rank, cls_strings, weight, members)
    _, win_strings, win_weight, win_members = best

    raw_weight: dict[str, int] = {}
    for v in win_members:
        raw_weight[v.text] = raw_weight.get(v.text, 0) + 1
    top = max(raw_weight.values())
    consensus = min(t for t, w in raw_weight.items() if w == top)
    consensus_norm = next(v.normalized for v in win_members if v.text == consensus)

    agreement = Fraction(win_weight, total)
    exact = len(set(win_strings)) == 1
    tier = tier_rule(total, agreement, exact, thresholds)
    return ConsensusResult(
        consensus_text=consensus,
        normalized_text=consensus_norm,
        agreement=agreement,
        n_votes=total,
        winning_class_exact=exact,
        tier=tier,
        n_transcripts=sum(1 for v in votes if v.kind == "transcript"),
        n_accepts=sum(1 for v in votes if v.kind == "accept"),
        n_rejects=sum(1 for v in votes if v.kind == "reject"),
        classes=classes,
    )


# -- page category consensus ------------------------------------------------------

@dataclass
class PageConsensus:
    category: str | None
    agreement: Fraction
    n_votes: int
    tier: Tier


def page_consensus(votes: list[str], thresholds: TierThresholds = TierThresholds()) -> PageConsensus:
    """Strict-majority category vote. The almost-confident band is strict
    (> 1/2) here: a bare tie never makes a category."""
    if not votes:
        return PageConsensus(None, Fraction(0), 0, Tier.QUESTIONABLE)
    counts: dict[str, int] = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    top = max(counts.values())
    total = len(votes)
    agreement = Fraction(top, total)
    category = None
    if 2 * top > total:
        category = min(c for c, n in counts.items() if n == top)
    if category is not None and total >= thresholds.full_min_votes and agreement >= thresholds.full_min_agreement:
        tier = Tier.FULLY_CONFIDENT
    elif category is not None and total >= thresholds.almost_min_votes and agreement > thresholds.almost_min_agreement:
        tier = Tier.ALMOST_CONFIDENT
    else:
        tier = Tier.QUESTIONABLE
    return PageConsensus(category, agreement, total, tier)


# -- inter-annotator agreement score ------------------------------------------------

def agreement_score(cluster_transcript_sets: list[list[str]]) -> Fraction | None:
    """Mean over clusters holding >= 2 transcripts of the mean pairwise
    similarity of their normalized texts; None when nothing qualifies."""
    cluster_means: list[Fraction] = []
    for texts in cluster_transcript_sets:
        if len(texts) < 2:
            continue
        sims = [
            similarity(texts[i], texts[j])
            for i in range(len(texts))
            for j in range(i + 1, len(texts))
        ]
        cluster_means.append(sum(sims, Fraction(0)) / len(sims))
    if not cluster_means:
        return None
    return sum(cluster_means, Fraction(0)) / len(cluster_means)


def collect_cluster_texts(store: Store, page_keys: list[str],
                          table: AbbreviationTable | None = None) -> list[list[str]]:
    """Normalized member-transcript texts per cluster of the given pages,
    ready for agreement_score."""
    table = table or AbbreviationTable()
    pages = set(page_keys)
    mark_to_cluster: dict[str, str] = {}
    order: list[str] = []
    for rid, payload in store.scan(Stage.COOKED, "mark_cluster"):
        if payload["page"] in pages:
            order.append(rid.key)
            for member in payload["members"]:
                mark_to_cluster[member] = rid.key
    texts: dict[str, list[str]] = {key: [] for key in order}
    for _, payload in store.scan(Stage.RAW, "transcript"):
        cluster = mark_to_cluster.get(payload["mark"])
        if cluster is not None:
            texts[cluster].append(normalize(payload["text"], table))
    return [texts[key] for key in order]


# -- the cook stage ------------------------------------------------------------------

@dataclass
class CookReport:
    clusters: int = 0
    cooked_transcripts: int = 0
    cooked_pages: int = 0
    untranscribed_clusters: list[str] = field(default_factory=list)
    tier_counts: dict[str, int] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "clusters": self.clusters,
            "cooked_transcripts": self.cooked_transcripts,
            "cooked_pages": self.cooked_pages,
            "untranscribed_clusters": self.untranscribed_clusters,
            "tier_counts": self.tier_counts,
        }


def run_cook(store: Store, config: Config, table: AbbreviationTable | None = None) -> CookReport:
    from recital.etl import StageStateError

    if store.count(Stage.RAW, "page") == 0:
        raise StageStateError("raw stage is empty; run etl first")
    if table is None:
        abbrev_path = config.get("abbrev.path")
        table = AbbreviationTable.load(abbrev_path) if abbrev_path else AbbreviationTable()

    theta = config.get_fraction("cook.theta")
    tau = config.get_fraction("cook.tau")
    thresholds = TierThresholds.from_config(config)
    threshold_payload = {
        "theta": str(theta),
        "tau": str(tau),
        **thresholds.as_payload(),
    }

    activity = store.begin_activity("cook", {
        "config_digest": config.digest(),
        **threshold_payload,
    }, now_ms())
    store.ensure_agent(ALGO_AGENT, "algorithm")

    marks_by_page: dict[str, list[tuple[RecordId, dict]]] = {}
    for rid, payload in store.scan(Stage.RAW, "mark"):
        marks_by_page.setdefault(payload["page"], []).append((rid, payload))
    transcripts_by_mark: dict[str, list[tuple[RecordId, dict]]] = {}
    for rid, payload in store.scan(Stage.RAW, "transcript"):
        transcripts_by_mark.setdefault(payload["mark"], []).append((rid, payload))

    report = CookReport()
    tier_counts = {t.value: 0 for t in Tier}

    for page_rid, page_payload in store.scan(Stage.RAW, "page"):
        drafts = cluster_marks(marks_by_page.get(page_rid.key, []), tau)
        for draft in drafts:
            cluster_payload = {
                "page": page_rid.key,
                "members": draft.members,
                "box": draft.consensus_box,
                "tag": draft.tag,
                "n_annotators": draft.n_annotators,
                "thresholds": threshold_payload,
            }
            cluster_rid, created = store.append_unique(
                Stage.COOKED, "mark_cluster", draft.nat_key, cluster_payload
            )
            if created:
                report.clusters += 1
                for member_key in draft.members:
                    store.add_edge(cluster_rid, RecordId.parse(member_key), activity, ALGO_AGENT)

            member_transcripts = [
                (rid, p)
                for member_key in draft.members
                for rid, p in transcripts_by_mark.get(member_key, [])
            ]
            if not member_transcripts:
                report.untranscribed_clusters.append(cluster_rid.key)
                continue
            votes = votes_for_transcripts([p for _, p in member_transcripts], table)
            result = consensus_transcript(votes, theta, thresholds)
            ct_payload = {
                "cluster": cluster_rid.key,
                "page": page_rid.key,
                "tag": draft.tag,
                "consensus_text": result.consensus_text,
                "normalized_text": result.normalized_text,
                "agreement": float(result.agreement),
                "agreement_frac": str(result.agreement),
                "n_votes": result.n_votes,
                "n_transcripts": result.n_transcripts,
                "n_accepts": result.n_accepts,
                "n_rejects": result.n_rejects,
                "winning_class_exact": result.winning_class_exact,
                "tier": result.tier.value,
                "thresholds": threshold_payload,
            }
            ct_rid, created = store.append_unique(
                Stage.COOKED, "cooked_transcript", draft.nat_key, ct_payload
            )
            if created:
                report.cooked_transcripts += 1
                for t_rid, _ in member_transcripts:
                    store.add_edge(ct_rid, t_rid, activity, ALGO_AGENT)
                if result.tier is Tier.QUESTIONABLE:
                    store.add_review_item(ct_rid, "questionable_tier", now_ms())
            if store.is_live(ct_rid):
                tier_counts[store.get(ct_rid)["tier"]] += 1

        votes = [v["category"] for v in page_payload.get("category_votes", [])]
        pc = page_consensus(votes, thresholds)
        cp_payload = {
            "page": page_rid.key,
            "category": pc.category,
            "agreement": float(pc.agreement),
            "agreement_frac": str(pc.agreement),
            "n_votes": pc.n_votes,
            "tier": pc.tier.value,
            "thresholds": threshold_payload,
        }
        cp_rid, created = store.append_unique(
            Stage.COOKED, "cooked_page", page_payload["source_subject"], cp_payload
        )
        if created:
            report.cooked_pages += 1
            store.add_edge(cp_rid, page_rid, activity, ALGO_AGENT)
            if pc.tier is Tier.QUESTIONABLE:
                store.add_review_item(cp_rid, "questionable_tier", now_ms())
        if store.is_live(cp_rid):
            tier_counts[store.get(cp_rid)["tier"]] += 1

    report.tier_counts = tier_counts
    store.end_activity(activity, now_ms())
    store.flush()
    return report
