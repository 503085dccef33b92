"""Whole-store invariant suite, run by the verify CLI command."""

from __future__ import annotations

from dataclasses import dataclass

from recital.cook import Tier
from recital.provenance import (
    check_acyclic,
    check_lineage_terminates_in_stage0,
    check_stage_constraint,
    check_totality,
)
from recital.store import KINDS_BY_STAGE, RecordId, Stage, Store


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _check_append_only(store: Store, stage: Stage) -> CheckResult:
    name = f"append_only_{stage.name.lower()}"
    baseline = store.baselines.get(int(stage))
    if baseline is None:
        return CheckResult(name, True, "no baseline recorded yet")
    current = store.stage_digest(stage)
    if current == baseline:
        return CheckResult(name, True, current[:12])
    return CheckResult(name, False, f"digest drifted: {baseline[:12]} -> {current[:12]}")


def _check_tier_partition(store: Store) -> CheckResult:
    valid = {t.value for t in Tier}
    bad = []
    for kind in ("cooked_transcript", "cooked_page"):
        for rid, payload in store.scan(Stage.COOKED, kind):
            if payload.get("tier") not in valid:
                bad.append(rid.key)
    if bad:
        return CheckResult("tier_partition", False, f"{len(bad)} records without a valid tier")
    return CheckResult("tier_partition", True)


def _check_cardinality(store: Store) -> CheckResult:
    """Raw facts carry exactly one classification edge each."""
    problems = []
    facts = 0
    class_edge_count = 0
    for kind in ("mark", "transcript"):
        for rid, payload in store.scan(Stage.RAW, kind):
            verifs = len(payload.get("verifications", [])) if kind == "transcript" else 0
            facts += 1 + verifs
            edges = [e for e in store.edges_from(rid)
                     if RecordId.parse(e.source).kind == "classification"]
            class_edge_count += len(edges)
            if len(edges) != 1 + verifs:
                problems.append(rid.key)
    for rid, payload in store.scan(Stage.RAW, "page"):
        votes = len(payload.get("category_votes", []))
        facts += votes
        edges = [e for e in store.edges_from(rid)
                 if RecordId.parse(e.source).kind == "classification"]
        class_edge_count += len(edges)
        if len(edges) != votes:
            problems.append(rid.key)
    if problems:
        return CheckResult("cardinality", False, f"{len(problems)} raw records off: {problems[:3]}")
    return CheckResult("cardinality", True, f"{facts} facts, {class_edge_count} classification edges")


def _check_supersession(store: Store) -> CheckResult:
    try:
        for stage in (Stage.COOKED, Stage.DOMAIN):
            for rid, payload in store.iter_all(stage):
                if payload.get("supersedes"):
                    store.get_by_key(payload["supersedes"])
                store.current(rid)
    except Exception as exc:  # noqa: BLE001 - report, don't crash the suite
        return CheckResult("supersession_integrity", False, str(exc))
    return CheckResult("supersession_integrity", True)


def _check_serials(store: Store) -> CheckResult:
    for stage in Stage:
        for kind in KINDS_BY_STAGE[stage]:
            expected = 1
            for rid, _ in store.scan(stage, kind):
                if rid.serial != expected:
                    return CheckResult("serial_monotonicity", False,
                                       f"{stage.name}/{kind} at {rid.serial}, expected {expected}")
                expected += 1
    return CheckResult("serial_monotonicity", True)


def run_verify(store: Store) -> list[CheckResult]:
    results = [
        _check_append_only(store, Stage.CS),
        _check_append_only(store, Stage.RAW),
        _check_serials(store),
    ]
    cycles = check_acyclic(store)
    results.append(CheckResult("provenance_acyclicity", not cycles,
                               f"{len(cycles)} records in cycles" if cycles else ""))
    missing = check_totality(store)
    results.append(CheckResult("provenance_totality", not missing,
                               f"{len(missing)} derived records without edges: {missing[:3]}" if missing else ""))
    violations = check_stage_constraint(store)
    results.append(CheckResult("provenance_stage_constraint", not violations,
                               f"{len(violations)} bad edges: {violations[:3]}" if violations else ""))
    dangling = check_lineage_terminates_in_stage0(store)
    results.append(CheckResult("lineage_termination", not dangling,
                               f"{len(dangling)} records cut off: {dangling[:3]}" if dangling else ""))
    results.append(_check_tier_partition(store))
    results.append(_check_cardinality(store))
    results.append(_check_supersession(store))
    return results


def render_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "pass" if r.ok else "FAIL"
        detail = f"  {r.detail}" if r.detail else ""
        lines.append(f"{r.name.ljust(width)}  {status}{detail}")
    return "\n".join(lines)
