"""Deterministic synthetic-corpus generator.

Builds ground-truth registers and simulates noisy volunteers working through
the classify / mark / transcribe task cascade, emitting a crowdsourcing
export file plus a truth table keyed so every emitted classification can be
traced back to its true region. The pseudo-random source is Python's
``random.Random`` (Mersenne Twister, documented stable seeding), so identical
(seed, params) produce byte-identical output on every platform.

Region geometry: one row per mark, rows vertically disjoint even under the
configured jitter, so intersection-over-union clustering recovers the true
regions whenever ``box_jitter`` is small against the row height.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import asdict, dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from recital.vocab import PAGE_CATEGORIES, PERSON_NAMES, PLAY_TITLES

_LETTERS = string.ascii_lowercase
_DIGITS = string.digits

# longest entry text we ever emit; see vocab module
MAX_TEXT_LEN = 9


@dataclass
class SynthParams:
    n_registers: int = 2
    pages_per_register: int = 20
    marks_per_page: int = 5
    n_volunteers: int = 3
    char_noise: float = 0.0      # per-character substitution probability
    skip: float = 0.0            # probability a volunteer skips a task
    box_jitter: float = 0.0      # uniform +/- jitter on box coordinates
    duplicate_rate: float = 0.0  # platform glitch: task run recorded twice
    category_noise: float = 0.0  # probability a classify vote is wrong
    verify_rate: float = 0.0     # probability a transcript gets verified
    insert_noise: float = 0.0
    delete_noise: float = 0.0

    def validate(self) -> None:
        for name in ("char_noise", "skip", "duplicate_rate", "category_noise",
                     "verify_rate", "insert_noise", "delete_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.box_jitter < 0:
            raise ValueError("box_jitter must be >= 0")
        for name in ("n_registers", "pages_per_register", "marks_per_page", "n_volunteers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _mark_tags(m: int) -> list[str]:
    base = ["date", "amount", "person"]
    return (base + ["play"] * m)[:m]


def _region_boxes(m: int) -> list[tuple[float, float, float, float]]:
    spacing = 0.9 / m
    h = round(0.78 * spacing, 4)
    return [(0.08, round(0.05 + i * spacing, 4), 0.5, h) for i in range(m)]


def _render_date(d: date) -> str:
    return f"{d.day}/{d.month}/{d.year % 100:02d}"


class _Emitter:
    def __init__(self, seed: int, params: SynthParams):
        self.rng = random.Random(seed)
        self.params = params
        self.lines: list[str] = []
        self.tick = 0
        self.n_subjects = 0
        self.n_classifications = 0
        self.by_volunteer: dict[str, int] = {}
        self.injected_duplicates: list[str] = []
        self.class_truth: dict[str, dict] = {}
        self._serial = 0

    def _ts(self, offset_ms: int = 0) -> str:
        # base 2020-01-01T00:00:00Z, one-second ticks
        ms = 1577836800000 + self.tick * 1000 + offset_ms
        secs, rem = divmod(ms, 1000)
        dt = datetime.fromtimestamp(secs, tz=timezone.utc)
        if rem:
            return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{rem:03d}Z"
        return dt.strftime("%Y-%m-%dT%H:%M:%SZ")

    def subject(self, sid: str, kind: str, parent: str | None, meta: dict) -> str:
        self.tick += 1
        self.lines.append(json.dumps({
            "type": "subject", "id": sid, "kind": kind, "parent": parent,
            "meta": meta, "created_at": self._ts(),
        }, ensure_ascii=False))
        self.n_subjects += 1
        return sid

    def classification(self, subject: str, volunteer: str, task: str, payload: dict,
                       truth: dict) -> str:
        self.tick += 1
        self._serial += 1
        cid = f"c-{self._serial:07d}"
        self.lines.append(json.dumps({
            "type": "classification", "id": cid, "subject": subject,
            "volunteer": volunteer, "task": task, "payload": payload,
            "created_at": self._ts(),
        }, ensure_ascii=False))
        self.n_classifications += 1
        self.by_volunteer[volunteer] = self.by_volunteer.get(volunteer, 0) + 1
        self.class_truth[cid] = dict(truth, task=task)
        if self.rng.random() < self.params.duplicate_rate:
            self._serial += 1
            dup_id = f"c-{self._serial:07d}"
            self.lines.append(json.dumps({
                "type": "classification", "id": dup_id, "subject": subject,
                "volunteer": volunteer, "task": task, "payload": payload,
                "created_at": self._ts(500),
            }, ensure_ascii=False))
            self.n_classifications += 1
            self.by_volunteer[volunteer] = self.by_volunteer.get(volunteer, 0) + 1
            self.injected_duplicates.append(dup_id)
            self.class_truth[dup_id] = dict(truth, task=task, anomaly="duplicate_run")
        return cid

    # -- noise ----------------------------------------------------------------

    def corrupt(self, text: str) -> str:
        p = self.params
        out: list[str] = []
        for ch in text:
            if p.delete_noise and ch.isalnum() and self.rng.random() < p.delete_noise:
                continue
            if ch.isalnum() and self.rng.random() < p.char_noise:
                ch = self._substitute(ch)
            out.append(ch)
            if p.insert_noise and self.rng.random() < p.insert_noise:
                out.append(self.rng.choice(_LETTERS))
        return "".join(out) or text[:1]

    def _substitute(self, ch: str) -> str:
        if ch.isdigit():
            pool = _DIGITS
        elif ch.isupper():
            pool = _LETTERS.upper()
        else:
            pool = _LETTERS
        repl = ch
        while repl == ch:
            repl = self.rng.choice(pool)
        return repl

    def jitter_box(self, box: tuple) -> list[float]:
        s = self.params.box_jitter
        if s == 0:
            return [float(v) for v in box]
        x, y, w, h = box
        jx = round(x + self.rng.uniform(-s, s), 4)
        jy = round(y + self.rng.uniform(-s, s), 4)
        jw = round(w + self.rng.uniform(-s, s), 4)
        jh = round(h + self.rng.uniform(-s, s), 4)
        jw = max(jw, 0.01)
        jh = max(jh, 0.01)
        jx = min(max(jx, 0.0), 1.0 - jw)
        jy = min(max(jy, 0.0), 1.0 - jh)
        return [jx, jy, jw, jh]


def _amount_text(rng: random.Random) -> tuple[str, tuple[int, int, int]]:
    livres = rng.randint(1, 999)
    sols = rng.randint(0, 19)
    deniers = rng.randint(0, 11)
    style = rng.randint(0, 2)
    if style >= 1:
        text = f"{livres}# {sols}s"
        if style == 2:
            full = f"{livres}# {sols}s {deniers}d"
            if len(full) <= MAX_TEXT_LEN:
                return full, (livres, sols, deniers)
        if len(text) <= MAX_TEXT_LEN:
            return text, (livres, sols, 0)
    return f"{livres}#", (livres, 0, 0)


def generate(seed: int, params: SynthParams) -> tuple[list[str], dict]:
    """Return (export lines, truth table) for the given seed and parameters."""
    params.validate()
    em = _Emitter(seed, params)
    rng = em.rng
    volunteers = [f"vol-{i + 1:02d}" for i in range(params.n_volunteers)]

    truth: dict = {
        "seed": seed,
        "params": asdict(params),
        "registers": [],
        "pages": [],
        "regions": {},
        "shows": [],
        "registry": {"play": sorted(set(PLAY_TITLES)), "person": sorted(set(PERSON_NAMES))},
    }

    boxes = _region_boxes(params.marks_per_page)
    tags = _mark_tags(params.marks_per_page)

    for ri in range(params.n_registers):
        reg_id = f"s-r{ri + 1:03d}"
        year = 1740 + (ri % 50)
        start = date(year, 1, 5) + timedelta(days=rng.randint(0, 60))
        end = start + timedelta(days=params.pages_per_register - 1)
        label = f"Registre {year} n.{ri + 1}"
        em.subject(reg_id, "root_register", None, {
            "register_index": ri + 1,
            "label": label,
            "declared_pages": params.pages_per_register,
            "year_span": [start.year, end.year],
        })
        truth["registers"].append({
            "id": reg_id, "label": label,
            "declared_pages": params.pages_per_register,
            "start_date": start.isoformat(),
        })

        for seq in range(1, params.pages_per_register + 1):
            page_id = f"s-p{ri + 1:03d}-{seq:04d}"
            page_date = start + timedelta(days=seq - 1)
            category = rng.choice(PAGE_CATEGORIES)
            em.subject(page_id, "page", reg_id, {
                "seq": seq,
                "image_ref": f"img/r{ri + 1:03d}/{seq:04d}.jpg",
                "aspect": 0.72,
            })

            marks: list[dict] = []
            for mi, (box, tag) in enumerate(zip(boxes, tags)):
                if tag == "date":
                    text = _render_date(page_date)
                elif tag == "amount":
                    text, _ = _amount_text(rng)
                elif tag == "person":
                    text = rng.choice(PERSON_NAMES)
                else:
                    text = rng.choice(PLAY_TITLES)
                marks.append({"region": f"{page_id}:r{mi}", "box": list(box), "tag": tag, "text": text})
                truth["regions"][f"{page_id}:r{mi}"] = {
                    "page": page_id, "box": list(box), "tag": tag, "text": text,
                }
            truth["pages"].append({
                "id": page_id, "register": reg_id, "seq": seq,
                "category": category, "date": page_date.isoformat(),
                "marks": marks,
            })
            truth["shows"].append({
                "register": reg_id,
                "register_label": label,
                "date": page_date.isoformat(),
                "plays": sorted({m["text"] for m in marks if m["tag"] == "play"}),
                "persons": sorted({m["text"] for m in marks if m["tag"] == "person"}),
            })

            # classify votes
            for vol in volunteers:
                if rng.random() < params.skip:
                    continue
                vote = category
                if params.category_noise and rng.random() < params.category_noise:
                    vote = rng.choice([c for c in PAGE_CATEGORIES if c != category])
                em.classification(page_id, vol, "classify", {"category": vote},
                                  {"page": page_id, "truth_category": category})

            # marks, then the transcription cascade the platform spawns
            for mi, mark in enumerate(marks):
                mark_class_ids: list[tuple[str, str]] = []  # (classification id, volunteer)
                for vol in volunteers:
                    if rng.random() < params.skip:
                        continue
                    cid = em.classification(
                        page_id, vol, "mark",
                        {"box": em.jitter_box(mark["box"]), "tag": mark["tag"]},
                        {"page": page_id, "region": mark["region"]},
                    )
                    mark_class_ids.append((cid, vol))
                for cid, author in mark_class_ids:
                    region_subject = f"s-m{cid[2:]}"
                    em.subject(region_subject, "mark_region", page_id, {
                        "source_mark": cid,
                        "region_hint": mark["region"],
                    })
                    transcript_ids = []
                    for vol in volunteers:
                        if rng.random() < params.skip:
                            continue
                        tid = em.classification(
                            region_subject, vol, "transcribe",
                            {"text": em.corrupt(mark["text"])},
                            {"page": page_id, "region": mark["region"]},
                        )
                        transcript_ids.append(tid)
                    if params.verify_rate:
                        for tid in transcript_ids:
                            if rng.random() < params.verify_rate:
                                verifier = rng.choice(volunteers)
                                verdict = "accept" if rng.random() < 0.85 else "reject"
                                em.classification(
                                    region_subject, verifier, "verify",
                                    {"target": tid, "verdict": verdict},
                                    {"page": page_id, "region": mark["region"], "verify_of": tid},
                                )

    truth["classifications"] = em.class_truth
    truth["counts"] = {
        "subjects": em.n_subjects,
        "classifications": em.n_classifications,
        "by_volunteer": dict(sorted(em.by_volunteer.items())),
        "injected_duplicates": len(em.injected_duplicates),
    }
    truth["injected_duplicate_ids"] = em.injected_duplicates
    return em.lines, truth


def write_corpus(seed: int, params: SynthParams, export_path: str | Path,
                 truth_path: str | Path | None = None,
                 registry_path: str | Path | None = None) -> dict:
    lines, truth = generate(seed, params)
    Path(export_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if truth_path is not None:
        Path(truth_path).write_text(json.dumps(truth, ensure_ascii=False, indent=1), encoding="utf-8")
    if registry_path is not None:
        rows = [f"play\t{name}\t" for name in truth["registry"]["play"]]
        rows += [f"person\t{name}\t" for name in truth["registry"]["person"]]
        Path(registry_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return truth
