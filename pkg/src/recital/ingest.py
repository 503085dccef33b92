"""Parsing of crowdsourcing export logs into the stage-0 model.

The export is line-delimited JSON, one record per line, discriminated by a
``type`` field (``subject`` or ``classification``). Malformed lines are
reported with their line number and never silently dropped; flagging of
platform misbehavior (duplicate runs, orphans, dangling verifies) is a pure
annotation pass that leaves the stored records untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable

from recital.metrics import box_in_unit_square
from recital.store import Stage, Store

SUBJECT_KINDS = ("root_register", "page", "mark_region")
TASKS = ("classify", "mark", "transcribe", "verify")

# Tasks a volunteer performs once per subject. A volunteer legitimately
# places many marks on one page or verifies several transcripts of one
# region, so those runs count as duplicates only when the payload repeats.
ONCE_PER_SUBJECT_TASKS = ("classify", "transcribe")


@dataclass(frozen=True)
class Subject:
    external_id: str
    kind: str
    parent_external_id: str | None
    meta: dict
    created_at: int  # ms since epoch, UTC


@dataclass(frozen=True)
class Classification:
    external_id: str
    subject_external_id: str
    volunteer_id: str
    task: str
    payload: dict
    created_at: int


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    duplicates_flagged: int = 0
    orphans_flagged: int = 0

    @property
    def lines_read(self) -> int:
        return self.accepted + len(self.rejected)


def parse_timestamp(text: str) -> int:
    """ISO-8601 UTC string to integer milliseconds since epoch."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def render_timestamp(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_subject(obj: dict) -> Subject:
    kind = obj["kind"]
    if kind not in SUBJECT_KINDS:
        raise ValueError(f"unknown subject kind {kind!r}")
    parent = obj.get("parent")
    if kind == "root_register" and parent is not None:
        raise ValueError("root_register must not have a parent")
    if kind in ("page", "mark_region") and not parent:
        raise ValueError(f"{kind} requires a parent")
    meta = obj.get("meta") or {}
    if not isinstance(meta, dict):
        raise ValueError("meta must be an object")
    return Subject(
        external_id=str(obj["id"]),
        kind=kind,
        parent_external_id=str(parent) if parent is not None else None,
        meta=meta,
        created_at=parse_timestamp(obj["created_at"]),
    )


def _parse_classification(obj: dict) -> Classification:
    task = obj["task"]
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    payload = obj.get("payload")
    if not isinstance(payload, dict):
        raise ValueError("payload must be an object")
    if task == "classify":
        if not isinstance(payload.get("category"), str) or not payload["category"]:
            raise ValueError("classify payload needs a category string")
    elif task == "mark":
        box = payload.get("box")
        if not (isinstance(box, list) and len(box) == 4):
            raise ValueError("mark payload needs a 4-element box")
        if not all(isinstance(v, (int, float)) for v in box):
            raise ValueError("box coordinates must be numbers")
        if not box_in_unit_square(tuple(box)):
            raise ValueError("box must lie in the unit square with positive size")
        if not isinstance(payload.get("tag"), str) or not payload["tag"]:
            raise ValueError("mark payload needs a tag string")
    elif task == "transcribe":
        if not isinstance(payload.get("text"), str) or payload["text"] == "":
            raise ValueError("transcribe payload needs non-empty text")
    elif task == "verify":
        if not payload.get("target"):
            raise ValueError("verify payload needs a target classification id")
        if payload.get("verdict") not in ("accept", "reject"):
            raise ValueError("verify verdict must be accept or reject")
    return Classification(
        external_id=str(obj["id"]),
        subject_external_id=str(obj["subject"]),
        volunteer_id=str(obj["volunteer"]),
        task=task,
        payload=payload,
        created_at=parse_timestamp(obj["created_at"]),
    )


def parse_cs_export(stream: IO[bytes] | IO[str] | Iterable[str]) -> tuple[list[Subject], list[Classification], IngestReport]:
    """Parse an export stream; order-preserving, conservation-checked.

    Hierarchy problems (a page whose parent is not a known register, a
    mark_region whose parent is not a page) and repeated external ids are
    rejected with their line numbers in a second pass.
    """
    subjects: list[tuple[int, Subject]] = []
    classifications: list[tuple[int, Classification]] = []
    report = IngestReport()
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rtype = obj.get("type")
            if rtype == "subject":
                subjects.append((lineno, _parse_subject(obj)))
            elif rtype == "classification":
                classifications.append((lineno, _parse_classification(obj)))
            else:
                raise ValueError(f"unknown record type {rtype!r}")
        except (ValueError, KeyError, TypeError) as exc:
            report.rejected.append((lineno, str(exc) or type(exc).__name__))

    # second pass: id uniqueness and subject hierarchy
    unique_subjects: list[tuple[int, Subject]] = []
    by_id: dict[str, Subject] = {}
    seen_class_ids: set[str] = set()
    for lineno, subj in subjects:
        if subj.external_id in by_id:
            report.rejected.append((lineno, f"duplicate subject external id {subj.external_id!r}"))
            continue
        by_id[subj.external_id] = subj
        unique_subjects.append((lineno, subj))
    hierarchy_ok: list[Subject] = []
    for lineno, subj in unique_subjects:
        if subj.kind == "page":
            parent = by_id.get(subj.parent_external_id)
            if parent is None or parent.kind != "root_register":
                report.rejected.append((lineno, f"page {subj.external_id!r} parent is not a known register"))
                continue
        elif subj.kind == "mark_region":
            parent = by_id.get(subj.parent_external_id)
            if parent is None or parent.kind != "page":
                report.rejected.append((lineno, f"mark_region {subj.external_id!r} parent is not a known page"))
                continue
        hierarchy_ok.append(subj)
    ok_classifications: list[Classification] = []
    for lineno, cls in classifications:
        if cls.external_id in seen_class_ids:
            report.rejected.append((lineno, f"duplicate classification external id {cls.external_id!r}"))
            continue
        seen_class_ids.add(cls.external_id)
        ok_classifications.append(cls)

    report.accepted = len(hierarchy_ok) + len(ok_classifications)
    return hierarchy_ok, ok_classifications, report


def flag_assignment_anomalies(
    classifications: list[Classification],
    known_subject_ids: set[str],
) -> list[tuple[Classification, tuple[str, ...]]]:
    """Annotate task runs that the platform should not have produced.

    Pure and idempotent: earliest run wins, later repeats are flagged
    ``duplicate_run``; runs on unknown subjects are ``orphan``; verifies whose
    target classification does not exist are ``dangling_verify``. The records
    themselves are never modified.
    """
    known_class_ids = {c.external_id for c in classifications}
    ordered = sorted(classifications, key=lambda c: (c.created_at, c.external_id))
    seen_runs: set[tuple] = set()
    flags_by_id: dict[str, list[str]] = {}
    for cls in ordered:
        flags = flags_by_id.setdefault(cls.external_id, [])
        if cls.task in ONCE_PER_SUBJECT_TASKS:
            run_key = (cls.volunteer_id, cls.subject_external_id, cls.task)
        elif cls.task == "verify":
            run_key = (cls.volunteer_id, cls.subject_external_id, cls.task, cls.payload["target"])
        else:  # mark: duplicate only when the drawn payload repeats exactly
            run_key = (
                cls.volunteer_id, cls.subject_external_id, cls.task,
                tuple(cls.payload["box"]), cls.payload["tag"],
            )
        if run_key in seen_runs:
            flags.append("duplicate_run")
        else:
            seen_runs.add(run_key)
        if cls.subject_external_id not in known_subject_ids:
            flags.append("orphan")
        if cls.task == "verify" and cls.payload["target"] not in known_class_ids:
            flags.append("dangling_verify")
    return [(cls, tuple(flags_by_id[cls.external_id])) for cls in classifications]


def subject_payload(subj: Subject) -> dict:
    return {
        "id": subj.external_id,
        "kind": subj.kind,
        "parent": subj.parent_external_id,
        "meta": subj.meta,
        "created_at": subj.created_at,
    }


def classification_payload(cls: Classification) -> dict:
    return {
        "id": cls.external_id,
        "subject": cls.subject_external_id,
        "volunteer": cls.volunteer_id,
        "task": cls.task,
        "payload": cls.payload,
        "created_at": cls.created_at,
    }


def subject_from_payload(p: dict) -> Subject:
    return Subject(p["id"], p["kind"], p.get("parent"), p.get("meta") or {}, p["created_at"])


def classification_from_payload(p: dict) -> Classification:
    return Classification(p["id"], p["subject"], p["volunteer"], p["task"], p["payload"], p["created_at"])


def ingest_into_store(store: Store, subjects: list[Subject], classifications: list[Classification]) -> tuple[int, int]:
    """Append parsed records at stage 0, skipping ids already present."""
    n_subj = n_cls = 0
    for subj in subjects:
        _, created = store.append_unique(Stage.CS, "subject", subj.external_id, subject_payload(subj))
        n_subj += created
    for cls in classifications:
        _, created = store.append_unique(Stage.CS, "classification", cls.external_id, classification_payload(cls))
        n_cls += created
    return n_subj, n_cls


def load_cs_view(store: Store) -> tuple[dict[str, Subject], list[Classification]]:
    """Materialize the stage-0 content for downstream batch jobs."""
    subjects = {
        p["id"]: subject_from_payload(p) for _, p in store.scan(Stage.CS, "subject")
    }
    classifications = [classification_from_payload(p) for _, p in store.scan(Stage.CS, "classification")]
    return subjects, classifications
