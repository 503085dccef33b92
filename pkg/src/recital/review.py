"""Curator review queue: resolutions supersede, never mutate.

Accepting, rejecting or editing a flagged record appends a superseding
record at the same stage plus a curator_decision activity and edge; the
algorithmic original stays retrievable forever through lineage.
"""

from __future__ import annotations

from dataclasses import dataclass

from recital.cook import Tier
from recital.store import RecordId, Store, StoreError
from recital.textnorm import AbbreviationTable, normalize
from recital.util import now_ms


class ConflictError(StoreError):
    """The review item was already resolved."""


class ResolutionError(ValueError):
    pass


VALID_ACTIONS = ("accept", "reject", "edit")


@dataclass
class ResolutionOutcome:
    item_serial: int
    status: str
    superseding: RecordId


def list_review_items(store: Store, status: str | None = None,
                      reason: str | None = None) -> list[dict]:
    out = []
    for item in store.review_items:
        item_status = store.item_status(item.serial)
        if status is not None and item_status != status:
            continue
        if reason is not None and item.reason != reason:
            continue
        res = store.resolutions.get(item.serial)
        out.append({
            "id": item.serial,
            "target": item.target,
            "reason": item.reason,
            "status": item_status,
            "created_at": item.created_at,
            "curator": res.curator if res else None,
            "superseding": res.superseding if res else None,
        })
    return out


def _superseding_payload(kind: str, base: dict, action: str, resolution: dict,
                         table: AbbreviationTable) -> dict:
    payload = dict(base)
    if kind == "cooked_transcript":
        if action == "accept":
            payload["tier"] = Tier.FULLY_CONFIDENT.value
        elif action == "edit":
            text = resolution.get("text")
            if not text:
                raise ResolutionError("edit on a transcript needs replacement text")
            payload["consensus_text"] = text
            payload["normalized_text"] = normalize(text, table)
            payload["tier"] = Tier.FULLY_CONFIDENT.value
    elif kind == "cooked_page":
        if action == "accept":
            if payload.get("category") is None and not resolution.get("category"):
                raise ResolutionError("accepting a category-less page needs a category")
            payload["category"] = resolution.get("category") or payload["category"]
            payload["tier"] = Tier.FULLY_CONFIDENT.value
        elif action == "edit":
            category = resolution.get("category")
            if not category:
                raise ResolutionError("edit on a page needs a category")
            payload["category"] = category
            payload["tier"] = Tier.FULLY_CONFIDENT.value
    elif kind == "link_decision":
        if action == "accept":
            if not payload.get("candidate"):
                raise ResolutionError("accepting a link needs an existing candidate")
            payload["status"] = "auto_linked"
        elif action == "edit":
            entity = resolution.get("entity")
            if not entity:
                raise ResolutionError("edit on a link needs a chosen entity key")
            payload["candidate"] = entity
            payload["candidate_name"] = None
            payload["status"] = "auto_linked"
    else:
        raise ResolutionError(f"records of kind {kind!r} are not reviewable")
    if action == "reject":
        payload["curator_verdict"] = "rejected"
    else:
        payload["curator_verdict"] = "accepted" if action == "accept" else "edited"
    return payload


def resolve_review_item(store: Store, item_serial: int, action: str, curator: str,
                        resolution: dict | None = None,
                        table: AbbreviationTable | None = None) -> ResolutionOutcome:
    """Apply one curator decision. Double resolution raises ConflictError."""
    if action not in VALID_ACTIONS:
        raise ResolutionError(f"unknown action {action!r}")
    item = store.get_review_item(item_serial)
    if item.serial in store.resolutions:
        raise ConflictError(f"review item {item_serial} already resolved")
    resolution = resolution or {}
    table = table or AbbreviationTable()

    target = store.current(RecordId.parse(item.target))
    base = store.get(target)
    payload = _superseding_payload(target.kind, base, action, resolution, table)
    payload["supersedes"] = target.key
    if target.kind == "link_decision" and payload.get("candidate") and payload["candidate_name"] is None:
        entity = store.get_by_key(payload["candidate"])
        payload["candidate_name"] = entity["canonical_name"]
    if target.kind == "link_decision":
        payload["decided_by"] = curator

    activity = store.begin_activity("curator_decision", {
        "item": item.serial,
        "action": action,
        "curator": curator,
    }, now_ms())
    store.ensure_agent(curator, "curator")
    superseding = store.append(target.stage, target.kind, payload)
    store.add_edge(superseding, target, activity, curator)
    store.end_activity(activity, now_ms())
    store.add_resolution(item, curator, action, resolution, superseding, now_ms())
    store.flush()
    return ResolutionOutcome(item.serial, store.item_status(item.serial), superseding)
