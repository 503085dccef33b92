"""Extract-Transform-Load from the crowdsourcing log to the raw artifact chain.

Every non-flagged volunteer task run becomes exactly one raw fact: a Mark, a
Transcript, a category vote on a Page, or a verification on a Transcript.
Nothing is aggregated, enriched or rewritten; platform misbehavior is repaired
by excluding the flagged runs and reporting them. Output ordering is fully
determined by record content (never by input file order), so re-running over
unchanged input reproduces the raw stage digest bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from recital.config import Config
from recital.ingest import Classification, flag_assignment_anomalies, load_cs_view
from recital.store import RecordId, Stage, Store
from recital.util import now_ms

ALGO_AGENT = "algo:etl/1"


class StageStateError(Exception):
    """The store is not in a state this stage can run from."""


@dataclass
class EtlReport:
    counts: dict[str, int] = field(default_factory=dict)
    excluded: list[tuple[str, str]] = field(default_factory=list)  # (classification id, reason)
    seq_issues: list[str] = field(default_factory=list)
    facts: int = 0
    valid_classifications: int = 0

    def to_payload(self) -> dict:
        return {
            "counts": self.counts,
            "excluded": [list(e) for e in self.excluded],
            "seq_issues": self.seq_issues,
            "facts": self.facts,
            "valid_classifications": self.valid_classifications,
        }


def _sorted_by_time(classifications: list[Classification]) -> list[Classification]:
    return sorted(classifications, key=lambda c: (c.created_at, c.external_id))


def run_etl(store: Store, config: Config) -> EtlReport:
    """Build the Register-Page-Mark-Transcript chain from stage 0."""
    if store.count(Stage.CS, "classification") == 0 and store.count(Stage.CS, "subject") == 0:
        raise StageStateError("nothing ingested yet; run ingest first")
    cs_digest = store.stage_digest(Stage.CS)
    for act in reversed(store.activities):
        if act.kind == "etl":
            if act.parameters.get("cs_digest") not in (None, cs_digest) and store.count(Stage.RAW, "page"):
                raise StageStateError(
                    "raw stage was built from different stage-0 content; "
                    "rebuild the store from its export to re-run the ETL"
                )
            break

    subjects, classifications = load_cs_view(store)
    flags = {c.external_id: f for c, f in flag_assignment_anomalies(classifications, set(subjects))}

    report = EtlReport()
    excluded: dict[str, str] = {}
    for cls in classifications:
        if flags[cls.external_id]:
            excluded[cls.external_id] = ",".join(flags[cls.external_id])

    activity = store.begin_activity("etl", {
        "config_digest": config.digest(),
        "cs_digest": cs_digest,
    }, now_ms())
    store.ensure_agent(ALGO_AGENT, "algorithm")

    # canonical content ordering, independent of ingest order
    registers = sorted((s for s in subjects.values() if s.kind == "root_register"),
                       key=lambda s: s.external_id)
    pages = sorted((s for s in subjects.values() if s.kind == "page"),
                   key=lambda s: (s.parent_external_id, s.meta.get("seq", 0), s.external_id))
    regions = {s.external_id: s for s in subjects.values() if s.kind == "mark_region"}

    live = [c for c in classifications if c.external_id not in excluded]
    votes_by_page: dict[str, list[Classification]] = {}
    marks_by_page: dict[str, list[Classification]] = {}
    transcribe_runs: list[Classification] = []
    verify_by_target: dict[str, list[Classification]] = {}
    for cls in _sorted_by_time(live):
        subj = subjects.get(cls.subject_external_id)
        if cls.task == "classify":
            if subj is None or subj.kind != "page":
                excluded[cls.external_id] = "classify_target_not_a_page"
                continue
            votes_by_page.setdefault(subj.external_id, []).append(cls)
        elif cls.task == "mark":
            if subj is None or subj.kind != "page":
                excluded[cls.external_id] = "mark_target_not_a_page"
                continue
            marks_by_page.setdefault(subj.external_id, []).append(cls)
        elif cls.task == "transcribe":
            if subj is None or subj.kind != "mark_region":
                excluded[cls.external_id] = "transcribe_target_not_a_mark_region"
                continue
            transcribe_runs.append(cls)
        elif cls.task == "verify":
            verify_by_target.setdefault(cls.payload["target"], []).append(cls)

    page_seqs_seen: dict[str, set] = {}
    reg_rids: dict[str, RecordId] = {}
    page_rids: dict[str, RecordId] = {}
    mark_rids: dict[str, RecordId] = {}  # mark classification id -> RecordId

    def cs_rid(kind: str, ext_id: str) -> RecordId:
        rid = store.find(Stage.CS, kind, ext_id)
        if rid is None:
            raise StageStateError(f"stage-0 {kind} {ext_id!r} disappeared")
        return rid

    pages_per_register: dict[str, int] = {}
    for page in pages:
        pages_per_register[page.parent_external_id] = pages_per_register.get(page.parent_external_id, 0) + 1

    for reg in registers:
        payload = {
            "source_subject": reg.external_id,
            "label": reg.meta.get("label", reg.external_id),
            "year_span": reg.meta.get("year_span"),
            "page_count": pages_per_register.get(reg.external_id, 0),
            "declared_pages": reg.meta.get("declared_pages"),
        }
        rid, created = store.append_unique(Stage.RAW, "register", reg.external_id, payload)
        reg_rids[reg.external_id] = rid
        if created:
            store.add_edge(rid, cs_rid("subject", reg.external_id), activity, ALGO_AGENT)

    for page in pages:
        reg_rid = reg_rids.get(page.parent_external_id)
        if reg_rid is None:
            continue  # hierarchy guaranteed by ingest; defensive
        seqs = page_seqs_seen.setdefault(page.parent_external_id, set())
        seq = page.meta.get("seq", 0)
        if seq in seqs:
            report.seq_issues.append(f"{page.external_id}: duplicate seq {seq} in {page.parent_external_id}")
        seqs.add(seq)
        votes = [
            {
                "category": v.payload["category"],
                "volunteer": v.volunteer_id,
                "source": v.external_id,
                "at": v.created_at,
            }
            for v in votes_by_page.get(page.external_id, [])
        ]
        payload = {
            "register": reg_rid.key,
            "source_subject": page.external_id,
            "seq": seq,
            "image_ref": page.meta.get("image_ref", ""),
            "aspect": page.meta.get("aspect", 0.75),
            "category_votes": votes,
        }
        rid, created = store.append_unique(Stage.RAW, "page", page.external_id, payload)
        page_rids[page.external_id] = rid
        if created:
            store.add_edge(rid, cs_rid("subject", page.external_id), activity, ALGO_AGENT)
            for vote in votes_by_page.get(page.external_id, []):
                store.ensure_agent(vote.volunteer_id, "volunteer")
                store.add_edge(rid, cs_rid("classification", vote.external_id), activity, vote.volunteer_id)

    for page_ext, runs in sorted(marks_by_page.items()):
        page_rid = page_rids.get(page_ext)
        if page_rid is None:
            for run in runs:
                excluded[run.external_id] = "page_missing_for_mark"
            continue
        for run in runs:
            payload = {
                "page": page_rid.key,
                "box": run.payload["box"],
                "tag": run.payload["tag"],
                "volunteer": run.volunteer_id,
                "source": run.external_id,
                "at": run.created_at,
            }
            rid, created = store.append_unique(Stage.RAW, "mark", run.external_id, payload)
            mark_rids[run.external_id] = rid
            if created:
                store.ensure_agent(run.volunteer_id, "volunteer")
                store.add_edge(rid, cs_rid("classification", run.external_id), activity, run.volunteer_id)

    for run in transcribe_runs:
        region = regions[run.subject_external_id]
        source_mark = region.meta.get("source_mark")
        mark_rid = mark_rids.get(source_mark) if source_mark else None
        if mark_rid is None:
            excluded[run.external_id] = "mark_missing_for_transcript"
            continue
        verifications = [
            {
                "volunteer": v.volunteer_id,
                "verdict": v.payload["verdict"],
                "source": v.external_id,
                "at": v.created_at,
            }
            for v in verify_by_target.get(run.external_id, [])
        ]
        payload = {
            "mark": mark_rid.key,
            "text": run.payload["text"],
            "volunteer": run.volunteer_id,
            "source": run.external_id,
            "at": run.created_at,
            "verifications": verifications,
        }
        rid, created = store.append_unique(Stage.RAW, "transcript", run.external_id, payload)
        if created:
            store.ensure_agent(run.volunteer_id, "volunteer")
            store.add_edge(rid, cs_rid("classification", run.external_id), activity, run.volunteer_id)
            for v in verify_by_target.get(run.external_id, []):
                store.ensure_agent(v.volunteer_id, "volunteer")
                store.add_edge(rid, cs_rid("classification", v.external_id), activity, v.volunteer_id)

    # verify runs whose target transcript never materialized are excluded too
    for target, runs in verify_by_target.items():
        if store.find(Stage.RAW, "transcript", target) is None:
            for run in runs:
                excluded[run.external_id] = "verify_target_not_materialized"

    n_votes = sum(len(v) for v in votes_by_page.values())
    n_verifs = sum(
        len(p.get("verifications", []))
        for _, p in store.scan(Stage.RAW, "transcript")
    )
    report.counts = {
        "register": store.count(Stage.RAW, "register"),
        "page": store.count(Stage.RAW, "page"),
        "mark": store.count(Stage.RAW, "mark"),
        "transcript": store.count(Stage.RAW, "transcript"),
        "category_votes": n_votes,
        "verifications": n_verifs,
    }
    report.facts = (
        report.counts["mark"] + report.counts["transcript"] + n_votes + n_verifs
    )
    report.valid_classifications = store.count(Stage.CS, "classification") - len(excluded)
    report.excluded.extend(sorted(excluded.items()))

    store.end_activity(activity, now_ms())
    store.set_baseline(Stage.CS)
    store.set_baseline(Stage.RAW)
    store.flush()
    return report


@dataclass
class CardinalityResult:
    ok: bool
    discrepancies: list[str]


def cardinality_check(store: Store, report: EtlReport) -> CardinalityResult:
    """Audit the one-to-one law: raw facts == valid classifications, and every
    fact-bearing raw record traces to stage-0 classifications."""
    discrepancies: list[str] = []
    facts = 0
    for kind in ("mark", "transcript"):
        for rid, payload in store.scan(Stage.RAW, kind):
            verifs = len(payload.get("verifications", [])) if kind == "transcript" else 0
            facts += 1 + verifs
            class_edges = [
                e for e in store.edges_from(rid)
                if RecordId.parse(e.source).kind == "classification"
            ]
            if len(class_edges) != 1 + verifs:
                discrepancies.append(
                    f"{rid.key}: {len(class_edges)} classification edges, expected {1 + verifs}"
                )
    for rid, payload in store.scan(Stage.RAW, "page"):
        votes = payload.get("category_votes", [])
        facts += len(votes)
        vote_edges = [
            e for e in store.edges_from(rid)
            if RecordId.parse(e.source).kind == "classification"
        ]
        if len(vote_edges) != len(votes):
            discrepancies.append(
                f"{rid.key}: {len(vote_edges)} vote edges for {len(votes)} votes"
            )
    valid = store.count(Stage.CS, "classification") - len(report.excluded)
    if facts != valid:
        discrepancies.append(f"facts {facts} != valid classifications {valid}")
    return CardinalityResult(ok=not discrepancies, discrepancies=discrepancies)
