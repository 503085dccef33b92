"""Stage-3 record linkage and domain assembly.

Cooked consensus texts are matched against a registry of canonical plays and
persons; pages with a fully-confident date become daily shows; amount-shaped
transcripts become financial entries in livres/sols/deniers. Only fully- and
almost-confident cooked records feed the domain; questionable ones are listed
for review instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from pathlib import Path

from recital.config import Config
from recital.cook import Tier
from recital.metrics import similarity
from recital.store import RecordId, Stage, Store
from recital.textnorm import normalize
from recital.util import now_ms

ALGO_AGENT = "algo:link/1"

DENIERS_PER_SOL = 12
SOLS_PER_LIVRE = 20


# -- amounts ----------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(\d+)\s*(#|lt\b|livres?\b|sols?\b|deniers?\b|s\b|d\b)?", re.IGNORECASE)
_NEGATIVE_RE = re.compile(r"-\s*\d")
_SLOT_ORDER = {"livres": 0, "sols": 1, "deniers": 2}


class AmountError(ValueError):
    pass


@dataclass(frozen=True)
class Amount:
    livres: int
    sols: int
    deniers: int

    @property
    def total_deniers(self) -> int:
        return self.livres * SOLS_PER_LIVRE * DENIERS_PER_SOL + self.sols * DENIERS_PER_SOL + self.deniers

    def render(self) -> str:
        parts = [f"{self.livres}#"]
        if self.sols or self.deniers:
            parts.append(f"{self.sols}s")
        if self.deniers:
            parts.append(f"{self.deniers}d")
        return " ".join(parts)


def _slot_for(unit: str, position: int) -> str | None:
    unit = unit.lower()
    if unit in ("#", "lt") or unit.startswith("livre"):
        return "livres"
    if unit == "s" or unit.startswith("sol"):
        return "sols"
    if unit == "d" or unit.startswith("denier"):
        return "deniers"
    if unit == "" and position == 0:
        return "livres"  # a bare leading integer reads as livres
    return None


def _tokenize_amount(text: str) -> Amount | None:
    pos = 0
    slots: dict[str, int] = {}
    last_order = -1
    index = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            return None if text[pos:].strip() else _finish_amount(slots)
        slot = _slot_for(m.group(2) or "", index)
        if slot is None or slot in slots or _SLOT_ORDER[slot] <= last_order:
            return None
        slots[slot] = int(m.group(1))
        last_order = _SLOT_ORDER[slot]
        index += 1
        pos = m.end()
    return _finish_amount(slots)


def _finish_amount(slots: dict[str, int]) -> Amount | None:
    if not slots:
        return None
    livres = slots.get("livres", 0)
    sols = slots.get("sols", 0)
    deniers = slots.get("deniers", 0)
    sols += deniers // DENIERS_PER_SOL
    deniers %= DENIERS_PER_SOL
    livres += sols // SOLS_PER_LIVRE
    sols %= SOLS_PER_LIVRE
    return Amount(livres, sols, deniers)


def parse_amount(text: str) -> Amount | None:
    """Period accounting grammar; carries normalized (25 sols -> 1# 5s).

    Returns None for text that is not an amount; raises AmountError when the
    text is amount-shaped but carries a negative component.
    """
    if _NEGATIVE_RE.search(text):
        if _tokenize_amount(text.replace("-", " ")) is not None:
            raise AmountError(f"negative amount component in {text!r}")
        return None
    return _tokenize_amount(text)


# -- dates ------------------------------------------------------------------------

_MONTHS = {
    "janvier": 1, "fevrier": 2, "février": 2, "mars": 3, "avril": 4,
    "mai": 5, "juin": 6, "juillet": 7, "aout": 8, "août": 8,
    "septembre": 9, "7bre": 9, "octobre": 10, "8bre": 10,
    "novembre": 11, "9bre": 11, "decembre": 12, "décembre": 12,
    "xbre": 12, "10bre": 12,
}
_DATE_NAME_RE = re.compile(r"^(\d{1,2}) (\S+) (\d{2,4})$")
_DATE_NUM_RE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{2,4})$")


def parse_register_date(text: str) -> date | None:
    """French month-name dates ("12 mai 1744", period abbreviations like
    "7bre" included) and compact numeric day/month/year; two-digit years
    resolve into the 1700s."""
    norm = normalize(text)
    month = None
    m = _DATE_NAME_RE.match(norm)
    if m:
        month = _MONTHS.get(m.group(2))
        day, year = int(m.group(1)), int(m.group(3))
    else:
        m = _DATE_NUM_RE.match(norm)
        if not m:
            return None
        day, month, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if month is None:
        return None
    if year < 100:
        year += 1700
    try:
        return date(year, month, day)
    except ValueError:
        return None


# -- registry ----------------------------------------------------------------------

@dataclass(frozen=True)
class RegistryEntry:
    kind: str
    canonical_name: str
    aliases: tuple[str, ...]
    role: str
    normalized_names: tuple[str, ...]


def load_registry(path: str | Path) -> list[RegistryEntry]:
    """Tab-separated: kind, canonical name, |-joined aliases, optional role.
    Canonical names and aliases must be normalized-distinct within a kind."""
    entries: list[RegistryEntry] = []
    seen: dict[tuple[str, str], str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 2:
            raise ValueError(f"{path}:{lineno}: expected at least kind<TAB>name")
        kind, name = cols[0].strip(), cols[1].strip()
        if kind not in ("play", "person"):
            raise ValueError(f"{path}:{lineno}: unknown registry kind {kind!r}")
        aliases = tuple(a.strip() for a in (cols[2] if len(cols) > 2 else "").split("|") if a.strip())
        role = cols[3].strip() if len(cols) > 3 and cols[3].strip() else "performer"
        normalized = tuple(dict.fromkeys(normalize(n) for n in (name, *aliases)))
        for norm in normalized:
            if (kind, norm) in seen:
                raise ValueError(
                    f"{path}:{lineno}: {norm!r} collides with entry {seen[(kind, norm)]!r}"
                )
            seen[(kind, norm)] = name
        entries.append(RegistryEntry(kind, name, aliases, role, normalized))
    return entries


# -- entity linking -----------------------------------------------------------------

@dataclass
class LinkOutcome:
    status: str                      # auto_linked | needs_review | new_entity_proposed | rejected
    candidate_name: str | None
    score: Fraction


def link_entity(normalized_text: str, entries: list[RegistryEntry], kind: str,
                auto: Fraction = Fraction(17, 20), review: Fraction = Fraction(7, 10),
                blocking_min_size: int = 10000) -> LinkOutcome:
    """Best similarity over canonical names and aliases of the requested kind.

    Registries above ``blocking_min_size`` are blocked on the first
    normalized character (documented approximation for large registries).
    """
    if not normalized_text:
        return LinkOutcome("rejected", None, Fraction(0))
    pool = [e for e in entries if e.kind == kind]
    if len(pool) > blocking_min_size:
        first = normalized_text[0]
        pool = [e for e in pool if any(n and n[0] == first for n in e.normalized_names)]
    best_score = Fraction(0)
    best_name: str | None = None
    for entry in pool:
        for norm in entry.normalized_names:
            s = similarity(normalized_text, norm)
            if s > best_score or (s == best_score and best_name is not None
                                  and entry.canonical_name < best_name):
                best_score = s
                best_name = entry.canonical_name
    if best_name is None:
        return LinkOutcome("new_entity_proposed", None, Fraction(0))
    if best_score >= auto:
        return LinkOutcome("auto_linked", best_name, best_score)
    if best_score >= review:
        return LinkOutcome("needs_review", best_name, best_score)
    return LinkOutcome("new_entity_proposed", best_name, best_score)


# -- domain assembly -----------------------------------------------------------------

@dataclass
class DomainReport:
    shows: int = 0
    dated_shows: int = 0
    undated_stubs: int = 0
    financial_entries: int = 0
    link_status_counts: dict[str, int] = field(default_factory=dict)
    questionable_skipped: list[str] = field(default_factory=list)
    unassembled_pages: list[str] = field(default_factory=list)
    date_ambiguities: list[str] = field(default_factory=list)
    stale_records: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "shows": self.shows,
            "dated_shows": self.dated_shows,
            "undated_stubs": self.undated_stubs,
            "financial_entries": self.financial_entries,
            "link_status_counts": self.link_status_counts,
            "questionable_skipped": self.questionable_skipped,
            "unassembled_pages": self.unassembled_pages,
            "date_ambiguities": self.date_ambiguities,
            "stale_records": self.stale_records,
        }


def _ensure_entities(store: Store, entries: list[RegistryEntry]) -> dict[tuple[str, str], RecordId]:
    """Registry entities are external bootstrap records: stage 3, no edges."""
    by_name: dict[tuple[str, str], RecordId] = {}
    for entry in entries:
        payload = {
            "kind": entry.kind,
            "canonical_name": entry.canonical_name,
            "aliases": list(entry.aliases),
            "role": entry.role,
            "external_refs": [],
            "origin": "registry_bootstrap",
        }
        rid, _ = store.append_unique(
            Stage.DOMAIN, "canonical_entity", f"{entry.kind}:{normalize(entry.canonical_name)}", payload
        )
        by_name[(entry.kind, entry.canonical_name)] = rid
    return by_name


def _current_by_nat(store: Store, stage: Stage, kind: str, nat: str) -> RecordId | None:
    rid = store.find(stage, kind, nat)
    return store.current(rid) if rid is not None else None


def build_domain(store: Store, config: Config, registry: list[RegistryEntry]) -> DomainReport:
    from recital.etl import StageStateError

    if store.count(Stage.COOKED, "cooked_page") == 0 and store.count(Stage.COOKED, "cooked_transcript") == 0:
        raise StageStateError("cooked stage is empty; run cook first")

    auto = config.get_fraction("link.auto_threshold")
    review = config.get_fraction("link.review_threshold")
    blocking = config.get_int("link.blocking_min_size")
    thresholds_payload = {"auto": str(auto), "review": str(review)}

    activity = store.begin_activity("link", {
        "config_digest": config.digest(),
        **thresholds_payload,
    }, now_ms())
    store.ensure_agent(ALGO_AGENT, "algorithm")

    entity_ids = _ensure_entities(store, registry)
    report = DomainReport()
    status_counts: dict[str, int] = {}

    # live cooked transcripts per page, fully/almost confident only
    by_page: dict[str, list[tuple[RecordId, dict]]] = {}
    for rid, payload in store.scan(Stage.COOKED, "cooked_transcript"):
        if not store.is_live(rid):
            continue
        if payload["tier"] == Tier.QUESTIONABLE.value:
            report.questionable_skipped.append(rid.key)
            continue
        by_page.setdefault(payload["page"], []).append((rid, payload))
    cooked_pages: dict[str, tuple[RecordId, dict]] = {}
    for rid, payload in store.scan(Stage.COOKED, "cooked_page"):
        if not store.is_live(rid):
            continue
        if payload["tier"] == Tier.QUESTIONABLE.value:
            report.questionable_skipped.append(rid.key)
            continue
        cooked_pages[payload["page"]] = (rid, payload)

    def cluster_key_of(ct_payload: dict) -> str:
        return ct_payload["cluster"]

    def place_decision(ct_rid: RecordId, ct_payload: dict, kind: str) -> tuple[RecordId, dict] | None:
        nat = f"link:{kind}:{cluster_key_of(ct_payload)}"
        outcome = link_entity(ct_payload["normalized_text"], registry, kind, auto, review, blocking)
        existing = _current_by_nat(store, Stage.DOMAIN, "link_decision", nat)
        if existing is not None:
            current = store.get(existing)
            if current["cooked"] == ct_rid.key:
                return existing, current
            report.stale_records.append(existing.key)
        candidate_key = None
        if outcome.candidate_name is not None:
            cand_rid = entity_ids.get((kind, outcome.candidate_name))
            candidate_key = cand_rid.key if cand_rid else None
        payload = {
            "cooked": ct_rid.key,
            "kind": kind,
            "candidate": candidate_key,
            "candidate_name": outcome.candidate_name,
            "score": float(outcome.score),
            "score_frac": str(outcome.score),
            "status": outcome.status,
            "decided_by": ALGO_AGENT,
            "thresholds": thresholds_payload,
        }
        if existing is not None:
            payload["supersedes"] = existing.key
            rid = store.append(Stage.DOMAIN, "link_decision", payload)
        else:
            rid, _ = store.append_unique(Stage.DOMAIN, "link_decision", nat, payload)
        store.add_edge(rid, ct_rid, activity, ALGO_AGENT)
        if outcome.status == "needs_review":
            store.add_review_item(rid, "link_needs_review", now_ms())
        return rid, payload

    # pass 1: link decisions and per-page dates
    page_dates: dict[str, date] = {}
    page_sources: dict[str, list[RecordId]] = {}
    decisions_by_page: dict[str, list[tuple[RecordId, dict]]] = {}
    for page_key, cts in sorted(by_page.items(), key=lambda kv: RecordId.parse(kv[0]).serial):
        dates_found: list[tuple[RecordId, date]] = []
        for ct_rid, ct_payload in cts:
            tag = ct_payload.get("tag", "")
            page_sources.setdefault(page_key, []).append(ct_rid)
            if tag == "date":
                if ct_payload["tier"] != Tier.FULLY_CONFIDENT.value:
                    continue
                parsed = parse_register_date(ct_payload["consensus_text"])
                if parsed is None:
                    report.date_ambiguities.append(ct_rid.key)
                    store.add_review_item(ct_rid, "date_ambiguous", now_ms())
                else:
                    dates_found.append((ct_rid, parsed))
            elif tag in ("play", "person"):
                placed = place_decision(ct_rid, ct_payload, tag)
                if placed is not None:
                    d_rid, d_payload = placed
                    status_counts[d_payload["status"]] = status_counts.get(d_payload["status"], 0) + 1
                    decisions_by_page.setdefault(page_key, []).append((d_rid, d_payload))
        distinct = sorted({d for _, d in dates_found})
        if len(distinct) == 1:
            page_dates[page_key] = distinct[0]
        elif len(distinct) > 1:
            first = min(dates_found, key=lambda t: t[0].serial)[0]
            report.date_ambiguities.append(first.key)
            store.add_review_item(first, "date_ambiguous", now_ms())

    # pass 2: shows grouped by (register, date); undated pages get stubs
    show_ids: dict[str, RecordId] = {}
    groups: dict[tuple[str, str], list[str]] = {}
    for page_rid, page_payload in store.scan(Stage.RAW, "page"):
        page_key = page_rid.key
        has_confident_source = bool(page_sources.get(page_key)) or page_key in cooked_pages
        if not has_confident_source:
            report.unassembled_pages.append(page_key)
            continue
        d = page_dates.get(page_key)
        if d is not None:
            groups.setdefault((page_payload["register"], d.isoformat()), []).append(page_key)
        else:
            groups.setdefault((page_payload["register"], f"undated:{page_key}"), []).append(page_key)

    for (register_key, date_label), page_keys in sorted(groups.items()):
        dated = not date_label.startswith("undated:")
        nat = f"show:{register_key}:{date_label}"
        plays: list[str] = []
        participants: list[list[str]] = []
        link_keys: list[str] = []
        tier_summary: dict[str, int] = {}
        sources: list[RecordId] = []
        for page_key in page_keys:
            for ct_rid in page_sources.get(page_key, []):
                sources.append(ct_rid)
                tier = store.get(ct_rid)["tier"]
                tier_summary[tier] = tier_summary.get(tier, 0) + 1
            if page_key in cooked_pages:
                cp_rid, cp_payload = cooked_pages[page_key]
                sources.append(cp_rid)
                tier_summary[cp_payload["tier"]] = tier_summary.get(cp_payload["tier"], 0) + 1
            for d_rid, d_payload in decisions_by_page.get(page_key, []):
                link_keys.append(d_rid.key)
                if d_payload["status"] == "auto_linked" and d_payload["candidate"]:
                    entity = store.get_by_key(d_payload["candidate"])
                    if d_payload["kind"] == "play":
                        if d_payload["candidate"] not in plays:
                            plays.append(d_payload["candidate"])
                    else:
                        pair = [d_payload["candidate"], entity.get("role", "performer")]
                        if pair not in participants:
                            participants.append(pair)
        payload = {
            "register": register_key,
            "date": date_label if dated else None,
            "pages": page_keys,
            "plays": sorted(plays),
            "participants": sorted(participants),
            "links": sorted(link_keys),
            "tier_summary": dict(sorted(tier_summary.items())),
        }
        rid, created = store.append_unique(Stage.DOMAIN, "show", nat, payload)
        show_ids.update({pk: rid for pk in page_keys})
        if created:
            report.shows += 1
            if dated:
                report.dated_shows += 1
            else:
                report.undated_stubs += 1
            for src in dict.fromkeys(s.key for s in sources):
                store.add_edge(rid, RecordId.parse(src), activity, ALGO_AGENT)

    # pass 3: financial entries from amount-shaped transcripts
    for page_key, cts in sorted(by_page.items(), key=lambda kv: RecordId.parse(kv[0]).serial):
        for ct_rid, ct_payload in cts:
            if ct_payload.get("tag") != "amount":
                continue
            try:
                amount = parse_amount(ct_payload["consensus_text"])
            except AmountError:
                amount = None
            if amount is None:
                continue
            nat = f"fin:{cluster_key_of(ct_payload)}"
            existing = _current_by_nat(store, Stage.DOMAIN, "financial_entry", nat)
            if existing is not None and store.get(existing)["source"] == ct_rid.key:
                continue
            show_rid = show_ids.get(page_key)
            payload = {
                "show": show_rid.key if show_rid else None,
                "label": ct_payload["consensus_text"],
                "livres": amount.livres,
                "sols": amount.sols,
                "deniers": amount.deniers,
                "total_deniers": amount.total_deniers,
                "source": ct_rid.key,
            }
            if existing is not None:
                payload["supersedes"] = existing.key
                rid = store.append(Stage.DOMAIN, "financial_entry", payload)
                report.stale_records.append(existing.key)
            else:
                rid, created = store.append_unique(Stage.DOMAIN, "financial_entry", nat, payload)
                if not created:
                    continue
            report.financial_entries += 1
            store.add_edge(rid, ct_rid, activity, ALGO_AGENT)

    report.link_status_counts = dict(sorted(status_counts.items()))
    store.end_activity(activity, now_ms())
    store.flush()
    return report
