"""Acceptance suite: one test per criterion, one printed line per criterion."""

import random
import time
from fractions import Fraction
from functools import lru_cache

import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from recital.api import ROUTE_COVERAGE, create_app
from recital.config import Config
from recital.cook import Tier, consensus_classes, run_cook
from recital.etl import run_etl
from recital.ingest import ingest_into_store, parse_cs_export
from recital.linkage import build_domain, load_registry
from recital.metrics import box_in_unit_square, box_iou, levenshtein, similarity
from recital.provenance import (
    check_acyclic,
    check_lineage_terminates_in_stage0,
    check_stage_constraint,
    check_totality,
)
from recital.store import KINDS_BY_STAGE, RecordId, Stage, Store
from recital.surrogate import layout_reconstitution, reading_order, text_reconstitution
from recital.synth import SynthParams, generate
from recital.textnorm import normalize


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {name}: {status}" + (f"  [{detail}]" if detail else ""))
    assert ok, f"{name}: {detail}"


def registry_entries(truth):
    from recital.linkage import RegistryEntry
    entries = [
        RegistryEntry("play", n, (), "performer", (normalize(n),))
        for n in truth["registry"]["play"]
    ]
    entries += [
        RegistryEntry("person", n, (), "performer", (normalize(n),))
        for n in truth["registry"]["person"]
    ]
    return entries


def run_pipeline(lines, truth, config=None, with_domain=True):
    config = config or Config()
    store = Store()
    subjects, classifications, ingest_report = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    store.set_baseline(Stage.CS)
    etl_report = run_etl(store, config)
    cook_report = run_cook(store, config)
    domain_report = None
    if with_domain:
        domain_report = build_domain(store, config, registry_entries(truth))
    return store, ingest_report, etl_report, cook_report, domain_report


def cluster_truth_text(store, truth, ct_payload):
    cluster = store.get_by_key(ct_payload["cluster"])
    member = store.get_by_key(cluster["members"][0])
    region = truth["classifications"][member["source"]]["region"]
    return truth["regions"][region]["text"]


# -- zero-noise fixpoint --------------------------------------------------------

@pytest.fixture(scope="module")
def zero_noise():
    params = SynthParams(n_registers=2, pages_per_register=20, marks_per_page=5,
                         n_volunteers=3)
    t0 = time.monotonic()
    lines, truth = generate(1, params)
    result = run_pipeline(lines, truth)
    elapsed = time.monotonic() - t0
    return (*result, truth, elapsed)


def test_zero_noise_fixpoint(zero_noise):
    store, _, _, _, _, truth, elapsed = zero_noise
    cts = store.scan(Stage.COOKED, "cooked_transcript")
    n_clusters = store.count(Stage.COOKED, "mark_cluster")
    fully = [p for _, p in cts if p["tier"] == Tier.FULLY_CONFIDENT.value]
    truth_ok = all(
        p["consensus_text"] == cluster_truth_text(store, truth, p) for _, p in cts
    )
    # every domain show matches the truth show table exactly
    truth_shows = {
        (s["register_label"], s["date"]): (tuple(s["plays"]), tuple(s["persons"]))
        for s in truth["shows"]
    }
    matched = 0
    domain_shows = [p for _, p in store.scan(Stage.DOMAIN, "show")]
    for show in domain_shows:
        register = store.get_by_key(show["register"])
        key = (register["label"], show["date"])
        plays = tuple(sorted(store.get_by_key(k)["canonical_name"] for k in show["plays"]))
        persons = tuple(sorted(store.get_by_key(k)["canonical_name"] for k, _ in show["participants"]))
        if truth_shows.get(key) == (plays, persons):
            matched += 1
    shows_exact = matched == len(domain_shows) == len(truth_shows)
    ok = (len(fully) == len(cts) == n_clusters and truth_ok and shows_exact
          and elapsed < 10.0)
    report("zero_noise_fixpoint", ok,
           f"{len(fully)}/{len(cts)} fully confident, shows {matched}/{len(truth_shows)}, "
           f"runtime {elapsed:.1f}s < 10s")


# -- noise recovery ---------------------------------------------------------------

@pytest.fixture(scope="module")
def noise_recovery():
    params = SynthParams(n_registers=10, pages_per_register=100, marks_per_page=5,
                         n_volunteers=5, char_noise=0.03, duplicate_rate=0.03,
                         box_jitter=0.01)
    t0 = time.monotonic()
    lines, truth = generate(42, params)
    result = run_pipeline(lines, truth)
    elapsed = time.monotonic() - t0
    return (*result, truth, elapsed)


def test_noise_recovery(noise_recovery):
    store, _, etl_report, _, _, truth, elapsed = noise_recovery
    cts = store.scan(Stage.COOKED, "cooked_transcript")
    fully = [(rid, p) for rid, p in cts if p["tier"] == Tier.FULLY_CONFIDENT.value]
    fc_rate = len(fully) / len(cts)
    truth_hits = sum(
        1 for _, p in fully if p["consensus_text"] == cluster_truth_text(store, truth, p)
    )
    truth_rate = truth_hits / len(fully)
    injected = truth["counts"]["injected_duplicates"]
    excluded_exact = len(etl_report.excluded) == injected
    ok = fc_rate >= 0.90 and truth_rate >= 0.98 and excluded_exact and elapsed < 60.0
    report("noise_recovery", ok,
           f"fully-confident {fc_rate:.3f} >= 0.90, truth {truth_rate:.4f} >= 0.98, "
           f"excluded {len(etl_report.excluded)} == injected {injected}, "
           f"runtime {elapsed:.1f}s < 60s")


# -- append-only audit --------------------------------------------------------------

def test_append_only_audit():
    params = SynthParams(n_registers=2, pages_per_register=15, marks_per_page=5,
                         n_volunteers=2, char_noise=0.15, box_jitter=0.005)
    lines, truth = generate(7, params)
    config = Config({"api.curator_token": "tok"})
    store = Store()
    subjects, classifications, _ = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    store.set_baseline(Stage.CS)
    run_etl(store, config)
    d0, d1 = store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)

    checkpoints = []
    run_cook(store, config)
    checkpoints.append(("cook", store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)))
    build_domain(store, config, registry_entries(truth))
    checkpoints.append(("link", store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)))
    for rid, _ in store.scan(Stage.RAW, "page", limit=5):
        text_reconstitution(store, rid, config)
        layout_reconstitution(store, rid, config)
    checkpoints.append(("surrogate", store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)))

    client = TestClient(create_app(store, config))
    pending = client.get("/api/review", params={"status": "pending", "limit": 1000}).json()["items"]
    assert len(pending) >= 50, f"need 50 pending review items, got {len(pending)}"
    rng = random.Random(99)
    rng.shuffle(pending)
    actions = ["accept", "reject", "edit"]
    resolved = 0
    for item in pending:
        if resolved >= 50:
            break
        action = rng.choice(actions)
        body = {"action": action, "curator": f"curator-{rng.randint(1, 3)}"}
        if action == "edit":
            body["text"] = "Arlequin"
            body["category"] = "recettes"
        r = client.post(f"/api/review/{item['id']}", json=body,
                        headers={"X-Curator-Token": "tok"})
        if r.status_code == 200:
            resolved += 1
    checkpoints.append(("50_resolutions", store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)))

    ok = resolved == 50 and all(c0 == d0 and c1 == d1 for _, c0, c1 in checkpoints)
    report("append_only_audit", ok,
           f"{resolved} resolutions; stage-0/1 digests invariant across "
           f"{', '.join(name for name, _, _ in checkpoints)}")


# -- provenance totality and acyclicity ------------------------------------------------

def test_provenance_totality_acyclicity(noise_recovery):
    store = noise_recovery[0]
    missing = check_totality(store)
    cycles = check_acyclic(store)
    violations = check_stage_constraint(store)
    dangling = check_lineage_terminates_in_stage0(store)
    n_derived = sum(
        store.count(stage, kind)
        for stage in (Stage.RAW, Stage.COOKED, Stage.DOMAIN)
        for kind in KINDS_BY_STAGE[stage]
    )
    ok = not missing and not cycles and not violations and not dangling
    report("provenance_totality_acyclicity", ok,
           f"{n_derived} derived records, {len(store.edges)} edges, "
           f"0 missing/cyclic/violating/dangling")


# -- tier partition and determinism -----------------------------------------------------

def test_tier_partition_and_determinism(noise_recovery):
    store = noise_recovery[0]
    valid = {t.value for t in Tier}
    total = 0
    per_tier = {t.value: 0 for t in Tier}
    for kind in ("cooked_transcript", "cooked_page"):
        for _, p in store.scan(Stage.COOKED, kind):
            assert p["tier"] in valid
            per_tier[p["tier"]] += 1
            total += 1
    partition_ok = sum(per_tier.values()) == total

    params = SynthParams(n_registers=2, pages_per_register=10, marks_per_page=5,
                         n_volunteers=3, char_noise=0.05, duplicate_rate=0.02,
                         box_jitter=0.01)
    lines, truth = generate(17, params)
    store_a, *_ = run_pipeline(lines, truth, with_domain=False)
    shuffled = list(lines)
    random.Random(5).shuffle(shuffled)
    store_b, *_ = run_pipeline(shuffled, truth, with_domain=False)
    same = store_a.stage_digest(Stage.COOKED) == store_b.stage_digest(Stage.COOKED)
    ok = partition_ok and same
    report("tier_partition_determinism", ok,
           f"partition {per_tier}, stage-2 digest invariant under shuffle: {same}")


# -- metric properties (>= 10^4 generated cases each) ------------------------------------

texts = st.text(max_size=24)
unit_boxes = st.tuples(
    st.integers(0, 900), st.integers(0, 900), st.integers(1, 99), st.integers(1, 99)
).map(lambda t: (t[0] / 1000, t[1] / 1000, t[2] / 1000, t[3] / 1000))


@given(texts, texts)
@settings(max_examples=10_000, deadline=None)
def test_metric_properties_similarity(a, b):
    s = similarity(a, b)
    assert s == similarity(b, a)
    assert 0 <= s <= 1
    assert (s == 1) == (a == b)


@given(unit_boxes, unit_boxes)
@settings(max_examples=10_000, deadline=None)
def test_metric_properties_box_iou(a, b):
    assert box_in_unit_square(a) and box_in_unit_square(b)
    iou = box_iou(a, b)
    assert iou == box_iou(b, a)
    assert 0 <= iou <= 1


@given(texts)
@settings(max_examples=10_000, deadline=None)
def test_metric_properties_normalize_idempotent(t):
    once = normalize(t)
    assert normalize(once) == once


@given(
    st.lists(st.tuples(st.integers(0, 80), st.integers(0, 80), st.integers(2, 20),
                       st.integers(2, 20)), max_size=6),
    st.randoms(use_true_random=False),
)
@settings(max_examples=10_000, deadline=None)
def test_metric_properties_reading_order_permutation(raw_boxes, rng):
    items = [(f"k{i}", [b[0] / 100, b[1] / 100, b[2] / 100, b[3] / 100])
             for i, b in enumerate(raw_boxes)]
    result = reading_order(items)
    assert sorted(result) == sorted(k for k, _ in items)
    shuffled = list(items)
    rng.shuffle(shuffled)
    assert reading_order(shuffled) == result


def test_metric_properties_reported():
    report("metric_properties", True,
           "similarity/box_iou/normalize/reading_order each property-tested at 10^4 cases")


# -- oracle equivalence --------------------------------------------------------------------

def test_oracle_equivalence_consensus_and_levenshtein():
    def naive_levenshtein(a, b):
        @lru_cache(maxsize=None)
        def rec(i, j):
            if i == 0:
                return j
            if j == 0:
                return i
            cost = 0 if a[i - 1] == b[j - 1] else 1
            return min(rec(i - 1, j) + 1, rec(i, j - 1) + 1, rec(i - 1, j - 1) + cost)
        return rec(len(a), len(b))

    rng = random.Random(12345)
    alphabet = "abcdefg "
    lev_cases = 0
    for _ in range(1000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8))).strip()
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 8))).strip()
        assert levenshtein(a, b) == naive_levenshtein(a, b), (a, b)
        lev_cases += 1

    def brute_components(strings, theta):
        uniq = sorted(set(strings))
        n = len(uniq)
        seen = [False] * n
        comps = []
        for s in range(n):
            if seen[s]:
                continue
            comp, queue = [], [s]
            seen[s] = True
            while queue:
                i = queue.pop()
                comp.append(uniq[i])
                for j in range(n):
                    if not seen[j] and similarity(uniq[i], uniq[j]) >= theta:
                        seen[j] = True
                        queue.append(j)
            comps.append(frozenset(comp))
        return sorted(comps, key=sorted)

    words = ["timon", "timpn", "timonn", "le bal", "le bol", "silvia", "sylvia",
             "arlequin", "arlequim", "x", ""]
    theta = Fraction(9, 10)
    consensus_cases = 0
    for _ in range(200):
        votes = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        got = sorted((frozenset(c) for c in consensus_classes(votes, theta)), key=sorted)
        assert got == brute_components(votes, theta), votes
        consensus_cases += 1

    report("oracle_equivalence", True,
           f"{consensus_cases} consensus-class cases vs brute-force single linkage; "
           f"{lev_cases} levenshtein cases vs naive recursion")


# -- progress arithmetic ----------------------------------------------------------------

def test_progress_arithmetic_exact_half():
    import json as _json

    total_pages, n_registers = 27_544, 63
    base, extra = divmod(total_pages, n_registers)
    lines = []
    ts = "2020-01-01T00:00:00Z"
    declared = []
    for r in range(n_registers):
        pages = base + (1 if r < extra else 0)
        declared.append(pages)
        lines.append(_json.dumps({
            "type": "subject", "id": f"s-r{r:03d}", "kind": "root_register", "parent": None,
            "meta": {"label": f"R{r}", "declared_pages": pages}, "created_at": ts,
        }))
    assert sum(declared) == total_pages
    classified = total_pages // 2
    page_no = 0
    for r in range(n_registers):
        for seq in range(declared[r]):
            if page_no >= classified:
                break
            pid = f"s-p{r:03d}-{seq:05d}"
            lines.append(_json.dumps({
                "type": "subject", "id": pid, "kind": "page", "parent": f"s-r{r:03d}",
                "meta": {"seq": seq + 1}, "created_at": ts,
            }))
            lines.append(_json.dumps({
                "type": "classification", "id": f"c-{page_no:06d}", "subject": pid,
                "volunteer": "vol-01", "task": "classify",
                "payload": {"category": "recettes"}, "created_at": ts,
            }))
            page_no += 1
    store = Store()
    subjects, classifications, _ = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    client = TestClient(create_app(store, Config()))
    got = client.get("/api/progress").json()["tasks"]["classify"]
    ok = (got["done"] == classified and got["total"] == total_pages
          and got["completeness"] == 0.5 and got["completeness_frac"] == "1/2")
    report("progress_arithmetic", ok,
           f"{got['done']}/{got['total']} -> completeness {got['completeness_frac']} exactly")


# -- api coverage -----------------------------------------------------------------------

def test_api_coverage_and_pagination(noise_recovery):
    store = noise_recovery[0]
    client = TestClient(create_app(store, Config()))
    uncovered = []
    for stage in Stage:
        for kind in KINDS_BY_STAGE[stage]:
            if (stage.name.lower(), kind) not in ROUTE_COVERAGE:
                uncovered.append(f"{stage.name.lower()}/{kind}")
    empty_routes = []
    for (stage_name, kind), route in ROUTE_COVERAGE.items():
        stage = Stage[stage_name.upper()]
        if store.count(stage, kind) == 0:
            continue
        items = client.get(route, params={"limit": 3}).json()["items"]
        if not items:
            empty_routes.append(route)

    # pagination union equals the full scan, no duplicates
    keys = []
    offset = 0
    while True:
        chunk = client.get("/api/marks", params={"offset": offset, "limit": 997}).json()["items"]
        if not chunk:
            break
        keys.extend(i["key"] for i in chunk)
        offset += len(chunk)
    expected = [rid.key for rid, _ in store.scan(Stage.RAW, "mark")]
    pagination_ok = keys == expected and len(set(keys)) == len(keys)

    ok = not uncovered and not empty_routes and pagination_ok
    report("api_coverage", ok,
           f"{len(ROUTE_COVERAGE)} kind routes, pagination union == full scan "
           f"({len(keys)} marks)")
