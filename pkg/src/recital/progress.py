"""Task completeness, tier distribution and volunteer activity indicators."""

from __future__ import annotations

from fractions import Fraction

from recital.store import Stage, Store

TASKS = ("classify", "mark", "transcribe", "verify")


def _ratio(done: int, total: int) -> dict:
    frac = Fraction(done, total) if total > 0 else Fraction(0)
    return {
        "done": done,
        "total": total,
        "completeness": float(frac),
        "completeness_frac": str(frac),
    }


def compute_progress(store: Store) -> dict:
    """Completeness per task, tier distribution over live cooked records,
    and per-volunteer activity.

    Page totals come from register metadata (declared page counts) and fall
    back to observed page subjects for registers that declare nothing.
    """
    declared_total = 0
    fallback_pages: dict[str, int] = {}
    registers: list[tuple[str, dict]] = []
    n_regions = 0
    for _, payload in store.scan(Stage.CS, "subject"):
        kind = payload["kind"]
        if kind == "root_register":
            registers.append((payload["id"], payload))
        elif kind == "page":
            fallback_pages[payload["parent"]] = fallback_pages.get(payload["parent"], 0) + 1
        elif kind == "mark_region":
            n_regions += 1
    total_pages = 0
    for reg_id, payload in registers:
        declared = payload.get("meta", {}).get("declared_pages")
        total_pages += declared if isinstance(declared, int) else fallback_pages.get(reg_id, 0)

    pages_classified: set[str] = set()
    pages_marked: set[str] = set()
    regions_transcribed: set[str] = set()
    transcribe_ids: set[str] = set()
    verified_targets: set[str] = set()
    volunteers: dict[str, dict] = {}
    for _, payload in store.scan(Stage.CS, "classification"):
        task = payload["task"]
        if task == "classify":
            pages_classified.add(payload["subject"])
        elif task == "mark":
            pages_marked.add(payload["subject"])
        elif task == "transcribe":
            regions_transcribed.add(payload["subject"])
            transcribe_ids.add(payload["id"])
        elif task == "verify":
            verified_targets.add(payload["payload"]["target"])
        vol = volunteers.setdefault(payload["volunteer"], {
            "volunteer": payload["volunteer"],
            "counts": {t: 0 for t in TASKS},
            "total": 0,
            "last_activity": 0,
        })
        vol["counts"][task] += 1
        vol["total"] += 1
        vol["last_activity"] = max(vol["last_activity"], payload["created_at"])

    verified_done = len(verified_targets & transcribe_ids)
    tasks = {
        "classify": _ratio(len(pages_classified), total_pages),
        "mark": _ratio(len(pages_marked), total_pages),
        "transcribe": _ratio(len(regions_transcribed), n_regions),
        "verify": _ratio(verified_done, len(transcribe_ids)),
    }

    tier_distribution: dict[str, int] = {
        "fully_confident": 0, "almost_confident": 0, "questionable": 0,
    }
    cooked_records = 0
    for kind in ("cooked_transcript", "cooked_page"):
        for rid, payload in store.scan(Stage.COOKED, kind):
            if store.is_live(rid):
                tier_distribution[payload["tier"]] += 1
                cooked_records += 1

    return {
        "tasks": tasks,
        "tier_distribution": tier_distribution,
        "cooked_records": cooked_records,
        "volunteers": sorted(volunteers.values(), key=lambda v: v["volunteer"]),
    }
