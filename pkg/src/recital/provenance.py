"""Lineage queries over the derivation edges.

Edges are written by the stage jobs as they produce records (see store);
this module answers the questions the edges exist for: where did a record
come from, who touched it, how far does its support reach down the stages.
A W3C-style interchange serialization is available for interoperability.
"""

from __future__ import annotations

from dataclasses import dataclass

from recital.store import RecordId, Stage, Store

# registry-loaded canonical entities have no crowd ancestry; lineage marks
# them as external leaves instead of failing totality
EXTERNAL_LEAF_KINDS = ("canonical_entity",)


@dataclass
class LineageGraph:
    root: str
    nodes: list[dict]                    # {key, stage, kind, payload}
    edges: list[dict]                    # {derived, source, activity, agent}
    external_leaves: list[str]

    def node_keys(self) -> list[str]:
        return [n["key"] for n in self.nodes]


def lineage(store: Store, rid: RecordId) -> LineageGraph:
    """Transitive closure over derivation edges, down to stage 0.

    Deterministic: nodes and edges come out sorted by record key.
    """
    store.get(rid)  # raises UnknownRecordError for bad ids
    seen: set[str] = set()
    nodes: list[dict] = []
    edges: list[dict] = []
    external: list[str] = []
    frontier = [rid]
    while frontier:
        current = frontier.pop()
        if current.key in seen:
            continue
        seen.add(current.key)
        payload = store.get(current)
        nodes.append({
            "key": current.key,
            "stage": int(current.stage),
            "kind": current.kind,
            "payload": payload,
        })
        if current.kind in EXTERNAL_LEAF_KINDS and not store.edges_from(current):
            external.append(current.key)
            continue
        for edge in store.edges_from(current):
            edges.append({
                "derived": edge.derived, "source": edge.source,
                "activity": edge.activity, "agent": edge.agent,
            })
            frontier.append(RecordId.parse(edge.source))
    nodes.sort(key=lambda n: n["key"])
    edges.sort(key=lambda e: (e["derived"], e["source"]))
    external.sort()
    return LineageGraph(root=rid.key, nodes=nodes, edges=edges, external_leaves=external)


@dataclass
class ReliabilitySummary:
    volunteers: int
    algorithm_activities: int
    curator_touched: bool
    tier: str | None


def reliability_summary(store: Store, rid: RecordId) -> ReliabilitySummary:
    graph = lineage(store, rid)
    volunteers: set[str] = set()
    activities: set[int] = set()
    curator = False
    for edge in graph.edges:
        agent_kind = store.agents.get(edge["agent"])
        if agent_kind == "volunteer":
            volunteers.add(edge["agent"])
        elif agent_kind == "curator":
            curator = True
        activities.add(edge["activity"])
    algo_activities = {
        a for a in activities
        if store.activities[a - 1].kind not in ("curator_decision",)
    }
    payload = store.get(rid)
    tier = payload.get("tier") if isinstance(payload, dict) else None
    return ReliabilitySummary(
        volunteers=len(volunteers),
        algorithm_activities=len(algo_activities),
        curator_touched=curator,
        tier=tier,
    )


# -- integrity checks -----------------------------------------------------------

def check_acyclic(store: Store) -> list[str]:
    """Kahn's algorithm over the full edge set; returns keys stuck in cycles."""
    indegree: dict[str, int] = {}
    outgoing: dict[str, list[str]] = {}
    keys: set[str] = set()
    for edge in store.edges:
        keys.add(edge.derived)
        keys.add(edge.source)
        indegree[edge.source] = indegree.get(edge.source, 0) + 1
        outgoing.setdefault(edge.derived, []).append(edge.source)
    queue = sorted(k for k in keys if indegree.get(k, 0) == 0)
    trimmed = 0
    while queue:
        key = queue.pop()
        trimmed += 1
        for nxt in outgoing.get(key, ()):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    if trimmed == len(keys):
        return []
    return sorted(k for k in keys if indegree.get(k, 0) > 0)


def check_totality(store: Store) -> list[str]:
    """Every stage-1/2/3 record needs at least one incoming derivation edge,
    registry-bootstrapped canonical entities excepted."""
    missing: list[str] = []
    for stage in (Stage.RAW, Stage.COOKED, Stage.DOMAIN):
        for rid, _ in store.iter_all(stage):
            if rid.kind in EXTERNAL_LEAF_KINDS:
                continue
            if not store.edges_from(rid):
                missing.append(rid.key)
    return missing


def check_stage_constraint(store: Store) -> list[str]:
    violations: list[str] = []
    for edge in store.edges:
        derived = RecordId.parse(edge.derived)
        source = RecordId.parse(edge.source)
        activity = store.activities[edge.activity - 1]
        if activity.kind == "curator_decision":
            if derived.stage != source.stage:
                violations.append(f"{edge.derived} <- {edge.source}")
        elif int(derived.stage) != int(source.stage) + 1:
            violations.append(f"{edge.derived} <- {edge.source}")
    return violations


def check_lineage_terminates_in_stage0(store: Store) -> list[str]:
    """Records whose support does not reach stage-0 classifications or an
    external registry leaf."""
    # leaf-reachability memoized over the DAG
    ok: dict[str, bool] = {}

    def reaches(rid: RecordId) -> bool:
        key = rid.key
        if key in ok:
            return ok[key]
        if rid.stage is Stage.CS:
            ok[key] = True
            return True
        if rid.kind in EXTERNAL_LEAF_KINDS and not store.edges_from(rid):
            ok[key] = True
            return True
        ok[key] = False  # cycle guard
        result = any(reaches(RecordId.parse(e.source)) for e in store.edges_from(rid))
        ok[key] = result
        return result

    bad: list[str] = []
    for stage in (Stage.RAW, Stage.COOKED, Stage.DOMAIN):
        for rid, _ in store.iter_all(stage):
            if not reaches(rid):
                bad.append(rid.key)
    return bad


# -- export -----------------------------------------------------------------------

def export_edges(store: Store) -> list[dict]:
    return [
        {"derived": e.derived, "source": e.source, "activity": e.activity, "agent": e.agent}
        for e in store.edges
    ]


def export_w3c_style(store: Store) -> dict:
    """Interchange document: entity/activity/agent sections plus the three
    classic relation sets."""
    entities = {}
    for stage in Stage:
        for rid, _ in store.iter_all(stage):
            entities[rid.key] = {"stage": rid.stage.name.lower(), "kind": rid.kind}
    activities = {
        f"activity:{a.serial}": {
            "type": a.kind,
            "parameters": a.parameters,
            "startedAtTime": a.started_at,
            "endedAtTime": a.ended_at,
        }
        for a in store.activities
    }
    agents = {aid: {"type": kind} for aid, kind in sorted(store.agents.items())}
    derived, generated, attributed = [], [], []
    seen_gen, seen_attr = set(), set()
    for e in store.edges:
        derived.append({"generatedEntity": e.derived, "usedEntity": e.source,
                        "activity": f"activity:{e.activity}"})
        if (e.derived, e.activity) not in seen_gen:
            seen_gen.add((e.derived, e.activity))
            generated.append({"entity": e.derived, "activity": f"activity:{e.activity}"})
        if (e.derived, e.agent) not in seen_attr:
            seen_attr.add((e.derived, e.agent))
            attributed.append({"entity": e.derived, "agent": e.agent})
    return {
        "entity": entities,
        "activity": activities,
        "agent": agents,
        "wasDerivedFrom": derived,
        "wasGeneratedBy": generated,
        "wasAttributedTo": attributed,
    }
