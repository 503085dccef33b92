"""Typed persistence for the four model stages.

One store file holds every stage as line-delimited, self-describing JSON
records. Stages 0 (crowdsourcing log) and 1 (raw artifact chain) are
append-only: nothing in the public surface deletes or mutates them. Stages 2
(cooked) and 3 (domain) are also physically append-only; revisions are
expressed as superseding records that reference the record they replace.

Provenance edges, activities, agents, review items and digest baselines live
in the same file as non-stage metadata lines; they never enter stage digests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable, Iterator


class Stage(IntEnum):
    CS = 0
    RAW = 1
    COOKED = 2
    DOMAIN = 3


KINDS_BY_STAGE: dict[Stage, tuple[str, ...]] = {
    Stage.CS: ("subject", "classification"),
    Stage.RAW: ("register", "page", "mark", "transcript"),
    Stage.COOKED: ("mark_cluster", "cooked_transcript", "cooked_page"),
    Stage.DOMAIN: ("canonical_entity", "link_decision", "show", "financial_entry"),
}

# Stages whose records must never change once written, enforced here and
# audited by digest baselines.
APPEND_ONLY_STAGES = (Stage.CS, Stage.RAW)


class StoreError(Exception):
    pass


class UnknownRecordError(StoreError):
    pass


class InvalidKindError(StoreError):
    pass


@dataclass(frozen=True, order=True)
class RecordId:
    stage: Stage
    kind: str
    serial: int

    @property
    def key(self) -> str:
        return f"{self.stage.name.lower()}/{self.kind}/{self.serial}"

    @classmethod
    def parse(cls, key: str) -> "RecordId":
        try:
            stage_name, kind, serial = key.split("/")
            return cls(Stage[stage_name.upper()], kind, int(serial))
        except (ValueError, KeyError) as exc:
            raise StoreError(f"malformed record key: {key!r}") from exc

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class StoreSnapshot:
    counts: dict[str, dict[str, int]]     # stage name -> kind -> count
    digests: dict[str, str]               # stage name -> lowercase hex sha256

    def count(self, stage: Stage, kind: str) -> int:
        return self.counts[stage.name.lower()].get(kind, 0)


def canonical_json(value: Any) -> str:
    """Deterministic serialization used for digests and config hashing."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class ProvActivity:
    serial: int
    kind: str
    parameters: dict[str, Any]
    started_at: int
    ended_at: int | None = None


@dataclass
class ProvEdge:
    derived: str
    source: str
    activity: int
    agent: str


@dataclass
class ReviewItem:
    serial: int
    target: str
    reason: str
    created_at: int


@dataclass
class ReviewResolution:
    serial: int
    item: int
    curator: str
    action: str
    payload: dict[str, Any]
    superseding: str | None
    resolved_at: int


# Activities whose edges may stay within one stage (curator supersession);
# every other derivation must step exactly one stage down.
SAME_STAGE_ACTIVITIES = ("curator_decision",)


class Store:
    """Append-only staged record store with provenance metadata.

    Pass ``path=None`` for a purely in-memory store (tests, dry runs).
    File-backed stores buffer writes; call :meth:`flush` or use the store as
    a context manager so batch jobs persist their tail.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[Stage, str], list[dict]] = {
            (stage, kind): [] for stage, kinds in KINDS_BY_STAGE.items() for kind in kinds
        }
        self._nat_index: dict[tuple[Stage, str], dict[str, int]] = {
            key: {} for key in self._records
        }
        self._superseded_by: dict[str, RecordId] = {}
        self.activities: list[ProvActivity] = []
        self.agents: dict[str, str] = {}            # agent id -> kind
        self.edges: list[ProvEdge] = []
        self._edge_keys: set[tuple[str, str]] = set()
        self._edges_by_derived: dict[str, list[ProvEdge]] = {}
        self._edges_into: dict[str, list[ProvEdge]] = {}
        self.review_items: list[ReviewItem] = []
        self._review_item_keys: dict[str, int] = {}  # "target|reason" -> serial
        self.resolutions: dict[int, ReviewResolution] = {}
        self.baselines: dict[int, str] = {}          # stage ordinal -> digest
        self._digest_cache: dict[Stage, str | None] = {s: None for s in Stage}
        self._fh = None
        if self.path is not None and self.path.exists():
            self._load()
        if self.path is not None:
            self._fh = open(self.path, "a", encoding="utf-8")

    # -- lifecycle ---------------------------------------------------------

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreError(f"{self.path}:{lineno}: bad store line") from exc
                self._replay(obj)

    def _replay(self, obj: dict) -> None:
        t = obj.get("t")
        if t == "rec":
            stage = Stage(obj["s"])
            kind = obj["k"]
            bucket = self._records[(stage, kind)]
            if obj["n"] != len(bucket) + 1:
                raise StoreError(f"serial gap in stored records for {stage.name}/{kind}")
            bucket.append(obj)
            nat = obj.get("key")
            if nat is not None:
                self._nat_index[(stage, kind)][nat] = obj["n"]
            sup = obj["p"].get("supersedes") if isinstance(obj["p"], dict) else None
            if sup:
                self._superseded_by[sup] = RecordId(stage, kind, obj["n"])
        elif t == "edge":
            edge = ProvEdge(obj["derived"], obj["source"], obj["activity"], obj["agent"])
            self._index_edge(edge)
        elif t == "act":
            self.activities.append(
                ProvActivity(obj["n"], obj["kind"], obj["params"], obj["started_at"], obj.get("ended_at"))
            )
        elif t == "agent":
            self.agents[obj["id"]] = obj["kind"]
        elif t == "review":
            item = ReviewItem(obj["n"], obj["target"], obj["reason"], obj["created_at"])
            self.review_items.append(item)
            self._review_item_keys[f"{item.target}|{item.reason}"] = item.serial
        elif t == "resolution":
            res = ReviewResolution(
                obj["n"], obj["item"], obj["curator"], obj["action"],
                obj.get("payload", {}), obj.get("superseding"), obj["resolved_at"],
            )
            self.resolutions[res.item] = res
        elif t == "baseline":
            self.baselines[obj["stage"]] = obj["digest"]
        else:
            raise StoreError(f"unknown store line type: {t!r}")

    def _write(self, obj: dict) -> None:
        if self._fh is not None:
            self._fh.write(canonical_json(obj) + "\n")

    # -- stage records -----------------------------------------------------

    def _check_kind(self, stage: Stage, kind: str) -> None:
        if kind not in KINDS_BY_STAGE[stage]:
            raise InvalidKindError(f"kind {kind!r} is not valid for stage {stage.name}")

    def append(self, stage: Stage, kind: str, payload: dict, nat_key: str | None = None) -> RecordId:
        """Append one record; serials are monotone per (stage, kind)."""
        self._check_kind(stage, kind)
        bucket = self._records[(stage, kind)]
        serial = len(bucket) + 1
        obj = {"t": "rec", "s": int(stage), "k": kind, "n": serial, "key": nat_key, "p": payload}
        bucket.append(obj)
        if nat_key is not None:
            self._nat_index[(stage, kind)][nat_key] = serial
        sup = payload.get("supersedes") if isinstance(payload, dict) else None
        rid = RecordId(stage, kind, serial)
        if sup:
            self._superseded_by[sup] = rid
        self._digest_cache[stage] = None
        self._write(obj)
        return rid

    def append_unique(self, stage: Stage, kind: str, nat_key: str, payload: dict) -> tuple[RecordId, bool]:
        """Append unless a record with this natural key exists already.

        Gives stage jobs idempotence: re-running over unchanged input finds
        every natural key present and appends nothing.
        """
        self._check_kind(stage, kind)
        serial = self._nat_index[(stage, kind)].get(nat_key)
        if serial is not None:
            return RecordId(stage, kind, serial), False
        return self.append(stage, kind, payload, nat_key=nat_key), True

    def get(self, rid: RecordId) -> dict:
        self._check_kind(rid.stage, rid.kind)
        bucket = self._records[(rid.stage, rid.kind)]
        if not 1 <= rid.serial <= len(bucket):
            raise UnknownRecordError(f"no such record: {rid.key}")
        return bucket[rid.serial - 1]["p"]

    def get_by_key(self, key: str) -> dict:
        return self.get(RecordId.parse(key))

    def find(self, stage: Stage, kind: str, nat_key: str) -> RecordId | None:
        self._check_kind(stage, kind)
        serial = self._nat_index[(stage, kind)].get(nat_key)
        return RecordId(stage, kind, serial) if serial is not None else None

    def count(self, stage: Stage, kind: str) -> int:
        self._check_kind(stage, kind)
        return len(self._records[(stage, kind)])

    def scan(
        self,
        stage: Stage,
        kind: str,
        where: Callable[[dict], bool] | None = None,
        offset: int = 0,
        limit: int | None = None,
    ) -> list[tuple[RecordId, dict]]:
        """Records in serial order, optionally filtered then paginated."""
        self._check_kind(stage, kind)
        out: list[tuple[RecordId, dict]] = []
        matched = 0
        for obj in self._records[(stage, kind)]:
            payload = obj["p"]
            if where is not None and not where(payload):
                continue
            if matched >= offset:
                out.append((RecordId(stage, kind, obj["n"]), payload))
                if limit is not None and len(out) >= limit:
                    break
            matched += 1
        return out

    def iter_all(self, stage: Stage) -> Iterator[tuple[RecordId, dict]]:
        for kind in KINDS_BY_STAGE[stage]:
            for obj in self._records[(stage, kind)]:
                yield RecordId(stage, kind, obj["n"]), obj["p"]

    # -- supersession ------------------------------------------------------

    def superseded_by(self, rid: RecordId) -> RecordId | None:
        return self._superseded_by.get(rid.key)

    def current(self, rid: RecordId) -> RecordId:
        """Follow the supersession chain to the live version."""
        seen = {rid.key}
        while True:
            nxt = self._superseded_by.get(rid.key)
            if nxt is None:
                return rid
            if nxt.key in seen:
                raise StoreError(f"supersession cycle at {rid.key}")
            seen.add(nxt.key)
            rid = nxt

    def is_live(self, rid: RecordId) -> bool:
        return rid.key not in self._superseded_by

    # -- snapshot / digests --------------------------------------------------

    def stage_digest(self, stage: Stage) -> str:
        cached = self._digest_cache[stage]
        if cached is not None:
            return cached
        h = hashlib.sha256()
        for kind in KINDS_BY_STAGE[stage]:
            for obj in self._records[(stage, kind)]:
                h.update(canonical_json({"k": obj["k"], "n": obj["n"], "key": obj["key"], "p": obj["p"]}).encode("utf-8"))
                h.update(b"\n")
        digest = h.hexdigest()
        self._digest_cache[stage] = digest
        return digest

    def snapshot(self) -> StoreSnapshot:
        counts = {
            stage.name.lower(): {
                kind: len(self._records[(stage, kind)]) for kind in KINDS_BY_STAGE[stage]
            }
            for stage in Stage
        }
        digests = {stage.name.lower(): self.stage_digest(stage) for stage in Stage}
        return StoreSnapshot(counts=counts, digests=digests)

    def set_baseline(self, stage: Stage) -> str:
        """Record the current digest of a stage for later append-only audits."""
        digest = self.stage_digest(stage)
        self.baselines[int(stage)] = digest
        self._write({"t": "baseline", "stage": int(stage), "digest": digest})
        return digest

    # -- provenance metadata -------------------------------------------------

    def begin_activity(self, kind: str, parameters: dict, started_at: int) -> ProvActivity:
        act = ProvActivity(len(self.activities) + 1, kind, parameters, started_at)
        self.activities.append(act)
        return act

    def end_activity(self, act: ProvActivity, ended_at: int) -> None:
        act.ended_at = ended_at
        self._write({
            "t": "act", "n": act.serial, "kind": act.kind, "params": act.parameters,
            "started_at": act.started_at, "ended_at": act.ended_at,
        })

    def ensure_agent(self, agent_id: str, kind: str) -> str:
        if agent_id not in self.agents:
            self.agents[agent_id] = kind
            self._write({"t": "agent", "id": agent_id, "kind": kind})
        return agent_id

    def _index_edge(self, edge: ProvEdge) -> None:
        self.edges.append(edge)
        self._edge_keys.add((edge.derived, edge.source))
        self._edges_by_derived.setdefault(edge.derived, []).append(edge)
        self._edges_into.setdefault(edge.source, []).append(edge)

    def add_edge(self, derived: RecordId, source: RecordId, activity: ProvActivity, agent_id: str) -> ProvEdge | None:
        """Append one derivation edge; duplicates (same derived, source) are skipped.

        Derivations must step exactly one stage down, except curator
        decisions, which supersede within their own stage.
        """
        if activity.kind in SAME_STAGE_ACTIVITIES:
            if derived.stage != source.stage:
                raise StoreError(
                    f"curator edge must stay within one stage: {derived.key} <- {source.key}"
                )
        elif int(derived.stage) != int(source.stage) + 1:
            raise StoreError(
                f"derivation must step one stage down: {derived.key} <- {source.key}"
            )
        # both ends must exist
        self.get(derived)
        self.get(source)
        if (derived.key, source.key) in self._edge_keys:
            return None
        edge = ProvEdge(derived.key, source.key, activity.serial, agent_id)
        self._index_edge(edge)
        self._write({
            "t": "edge", "derived": edge.derived, "source": edge.source,
            "activity": edge.activity, "agent": edge.agent,
        })
        return edge

    def edges_from(self, rid: RecordId) -> list[ProvEdge]:
        """Edges whose derived end is this record (its direct sources)."""
        return list(self._edges_by_derived.get(rid.key, ()))

    def edges_to(self, rid: RecordId) -> list[ProvEdge]:
        """Edges that derive something from this record."""
        return list(self._edges_into.get(rid.key, ()))

    # -- review queue ------------------------------------------------------

    def add_review_item(self, target: RecordId, reason: str, created_at: int) -> tuple[ReviewItem, bool]:
        nat = f"{target.key}|{reason}"
        serial = self._review_item_keys.get(nat)
        if serial is not None:
            return self.review_items[serial - 1], False
        item = ReviewItem(len(self.review_items) + 1, target.key, reason, created_at)
        self.review_items.append(item)
        self._review_item_keys[nat] = item.serial
        self._write({
            "t": "review", "n": item.serial, "target": item.target,
            "reason": item.reason, "created_at": item.created_at,
        })
        return item, True

    def get_review_item(self, serial: int) -> ReviewItem:
        if not 1 <= serial <= len(self.review_items):
            raise UnknownRecordError(f"no such review item: {serial}")
        return self.review_items[serial - 1]

    def item_status(self, serial: int) -> str:
        res = self.resolutions.get(serial)
        if res is None:
            return "pending"
        return {"accept": "accepted", "reject": "rejected", "edit": "edited"}[res.action]

    def add_resolution(
        self, item: ReviewItem, curator: str, action: str,
        payload: dict, superseding: RecordId | None, resolved_at: int,
    ) -> ReviewResolution:
        if item.serial in self.resolutions:
            raise StoreError(f"review item {item.serial} already resolved")
        res = ReviewResolution(
            len(self.resolutions) + 1, item.serial, curator, action,
            payload, superseding.key if superseding else None, resolved_at,
        )
        self.resolutions[item.serial] = res
        self._write({
            "t": "resolution", "n": res.serial, "item": res.item, "curator": res.curator,
            "action": res.action, "payload": res.payload, "superseding": res.superseding,
            "resolved_at": res.resolved_at,
        })
        return res

    # -- dump / restore ------------------------------------------------------

    def dump_lines(self) -> Iterator[str]:
        """Re-emit the store in its line-delimited encoding, records first."""
        for stage in Stage:
            for kind in KINDS_BY_STAGE[stage]:
                for obj in self._records[(stage, kind)]:
                    yield canonical_json(obj)
        for act in self.activities:
            yield canonical_json({
                "t": "act", "n": act.serial, "kind": act.kind, "params": act.parameters,
                "started_at": act.started_at, "ended_at": act.ended_at,
            })
        for agent_id, kind in self.agents.items():
            yield canonical_json({"t": "agent", "id": agent_id, "kind": kind})
        for edge in self.edges:
            yield canonical_json({
                "t": "edge", "derived": edge.derived, "source": edge.source,
                "activity": edge.activity, "agent": edge.agent,
            })
        for item in self.review_items:
            yield canonical_json({
                "t": "review", "n": item.serial, "target": item.target,
                "reason": item.reason, "created_at": item.created_at,
            })
        for res in sorted(self.resolutions.values(), key=lambda r: r.serial):
            yield canonical_json({
                "t": "resolution", "n": res.serial, "item": res.item, "curator": res.curator,
                "action": res.action, "payload": res.payload, "superseding": res.superseding,
                "resolved_at": res.resolved_at,
            })
        for stage_ord, digest in sorted(self.baselines.items()):
            yield canonical_json({"t": "baseline", "stage": stage_ord, "digest": digest})

    @classmethod
    def restore(cls, lines: Iterator[str], path: str | Path | None = None) -> "Store":
        store = cls(path=None)
        for line in lines:
            line = line.strip()
            if line:
                store._replay(json.loads(line))
        if path is not None:
            store.path = Path(path)
            store._fh = open(store.path, "w", encoding="utf-8")
            for out in store.dump_lines():
                store._fh.write(out + "\n")
            store.flush()
        return store
