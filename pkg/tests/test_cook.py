import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recital.config import Config
from recital.cook import (
    Tier,
    TIER_RANK,
    TierThresholds,
    Vote,
    agreement_score,
    cluster_marks,
    consensus_classes,
    consensus_transcript,
    page_consensus,
    run_cook,
    tier_rule,
    votes_for_transcripts,
)
from recital.etl import run_etl
from recital.ingest import ingest_into_store, parse_cs_export
from recital.metrics import box_iou, similarity
from recital.store import RecordId, Stage, Store
from recital.synth import SynthParams, generate
from recital.textnorm import AbbreviationTable, normalize


# -- oracles -------------------------------------------------------------------

def brute_force_components(items, related):
    """Connected components by BFS over the full pairwise relation matrix."""
    n = len(items)
    adj = [[related(items[i], items[j]) for j in range(n)] for i in range(n)]
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        comp, queue = [], [start]
        seen[start] = True
        while queue:
            i = queue.pop()
            comp.append(i)
            for j in range(n):
                if not seen[j] and adj[i][j]:
                    seen[j] = True
                    queue.append(j)
        comps.append(sorted(comp))
    return comps


# -- tier rule -----------------------------------------------------------------

def test_tier_rule_examples():
    assert tier_rule(3, Fraction(1), True) is Tier.FULLY_CONFIDENT
    assert tier_rule(2, Fraction(1, 2), False) is Tier.ALMOST_CONFIDENT
    assert tier_rule(4, Fraction(1, 2), True) is Tier.ALMOST_CONFIDENT
    assert tier_rule(1, Fraction(1), True) is Tier.QUESTIONABLE


def test_tier_rule_enumerated_table():
    # oracle: enumerate the rule over the three predicates directly
    for n in range(0, 6):
        for agr in (Fraction(0), Fraction(1, 2), Fraction(2, 3), Fraction(1)):
            for exact in (True, False):
                got = tier_rule(n, agr, exact)
                if n >= 3 and agr >= Fraction(2, 3) and exact:
                    expected = Tier.FULLY_CONFIDENT
                elif n >= 2 and agr >= Fraction(1, 2):
                    expected = Tier.ALMOST_CONFIDENT
                else:
                    expected = Tier.QUESTIONABLE
                assert got is expected, (n, agr, exact)


# -- clustering ------------------------------------------------------------------

def mk(serial, box, tag="play", volunteer="v1", source=None):
    rid = RecordId(Stage.RAW, "mark", serial)
    return rid, {"page": "raw/page/1", "box": list(box), "tag": tag,
                 "volunteer": volunteer, "source": source or f"c-{serial}"}


def test_single_mark_singleton_cluster():
    clusters = cluster_marks([mk(1, (0.1, 0.1, 0.2, 0.1))], Fraction(1, 2))
    assert len(clusters) == 1
    assert clusters[0].consensus_box == [0.1, 0.1, 0.2, 0.1]
    assert clusters[0].n_annotators == 1


def test_two_identical_boxes_one_cluster():
    clusters = cluster_marks(
        [mk(1, (0.1, 0.1, 0.2, 0.1), volunteer="v1"), mk(2, (0.1, 0.1, 0.2, 0.1), volunteer="v2")],
        Fraction(1, 2),
    )
    assert len(clusters) == 1
    assert clusters[0].n_annotators == 2


def test_chain_connected_cluster_against_brute_force():
    # A-B IoU 0.6, B-C IoU ~0.55, A-C IoU ~0.3: single linkage joins all three
    a = mk(1, (0.0, 0.0, 0.3, 0.2))
    b = mk(2, (0.075, 0.0, 0.3, 0.2))
    c = mk(3, (0.075 + 0.0871, 0.0, 0.3, 0.2))
    tau = 0.5
    assert box_iou(tuple(a[1]["box"]), tuple(b[1]["box"])) == pytest.approx(0.6, abs=0.01)
    assert box_iou(tuple(b[1]["box"]), tuple(c[1]["box"])) == pytest.approx(0.55, abs=0.01)
    assert box_iou(tuple(a[1]["box"]), tuple(c[1]["box"])) == pytest.approx(0.3, abs=0.02)
    clusters = cluster_marks([a, b, c], tau)
    oracle = brute_force_components(
        [a, b, c], lambda x, y: box_iou(tuple(x[1]["box"]), tuple(y[1]["box"])) >= tau
    )
    assert len(clusters) == len(oracle) == 1
    assert clusters[0].member_serials == [1, 2, 3]


boxes_strategy = st.lists(
    st.tuples(st.integers(0, 70), st.integers(0, 70), st.integers(5, 30), st.integers(5, 30))
    .map(lambda t: (t[0] / 100, t[1] / 100, t[2] / 100, t[3] / 100)),
    min_size=1, max_size=7,
)


@given(boxes_strategy, st.randoms(use_true_random=False))
@settings(max_examples=300, deadline=None)
def test_clustering_is_partition_and_order_invariant(boxes, rng):
    marks = [mk(i + 1, b, volunteer=f"v{i}") for i, b in enumerate(boxes)]
    tau = 0.5
    clusters = cluster_marks(marks, tau)
    all_members = sorted(s for c in clusters for s in c.member_serials)
    assert all_members == sorted(m[0].serial for m in marks)  # partition, no loss/dup
    shuffled = list(marks)
    rng.shuffle(shuffled)
    clusters_b = cluster_marks(shuffled, tau)
    assert [c.member_serials for c in clusters] == [c.member_serials for c in clusters_b]
    assert [c.consensus_box for c in clusters] == [c.consensus_box for c in clusters_b]
    # brute-force component oracle
    oracle = brute_force_components(
        marks, lambda x, y: box_iou(tuple(x[1]["box"]), tuple(y[1]["box"])) >= tau
    )
    oracle_serials = sorted(tuple(marks[i][0].serial for i in comp) for comp in oracle)
    assert sorted(tuple(c.member_serials) for c in clusters) == oracle_serials


def test_consensus_box_is_lower_median():
    marks = [mk(1, (0.1, 0.1, 0.2, 0.1)), mk(2, (0.12, 0.1, 0.2, 0.1)),
             mk(3, (0.14, 0.1, 0.2, 0.1)), mk(4, (0.16, 0.1, 0.2, 0.1))]
    clusters = cluster_marks(marks, 0.3)
    assert len(clusters) == 1
    assert clusters[0].consensus_box[0] == 0.12  # lower median of 4 values


def test_majority_tag_with_lexicographic_tie():
    marks = [mk(1, (0.1, 0.1, 0.2, 0.1), tag="play"), mk(2, (0.1, 0.1, 0.2, 0.1), tag="date")]
    clusters = cluster_marks(marks, 0.5)
    assert clusters[0].tag == "date"


# -- transcript consensus -----------------------------------------------------------

def tvote(text, volunteer="v1", at=0, source="c-x"):
    return Vote("transcript", text, normalize(text), volunteer, at, source)


def test_unanimous_consensus():
    votes = [tvote("Arlequin", f"v{i}", at=i, source=f"c{i}") for i in range(3)]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.consensus_text == "Arlequin"
    assert r.agreement == 1
    assert r.tier is Tier.FULLY_CONFIDENT


def test_single_transcript_questionable():
    r = consensus_transcript([tvote("Arlequin")], Fraction(9, 10))
    assert r.consensus_text == "Arlequin"
    assert r.agreement == 1
    assert r.tier is Tier.QUESTIONABLE  # n_votes < 2


def test_near_miss_splits_class_at_theta():
    # similarity(arlequin, arlequim) = 1 - 1/8 = 0.875 < 0.9
    assert similarity("arlequin", "arlequim") == Fraction(7, 8)
    votes = [tvote("Arlequin", "v1", 0, "c1"), tvote("Arlequin", "v2", 1, "c2"),
             tvote("Arlequim", "v3", 2, "c3")]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.consensus_text == "Arlequin"
    assert r.agreement == Fraction(2, 3)
    assert r.n_votes == 3
    assert r.tier is Tier.FULLY_CONFIDENT


def test_near_miss_merges_below_theta():
    # at theta 0.85 the 0.875-similar reading joins the winning class: not exact
    votes = [tvote("Arlequin", "v1", 0, "c1"), tvote("Arlequin", "v2", 1, "c2"),
             tvote("Arlequim", "v3", 2, "c3")]
    r = consensus_transcript(votes, Fraction(85, 100))
    assert r.agreement == 1
    assert not r.winning_class_exact
    assert r.tier is Tier.ALMOST_CONFIDENT


def test_verify_votes_weigh_in():
    transcripts = [
        {"text": "Silvia", "volunteer": "v1", "at": 0, "source": "c1",
         "verifications": [{"volunteer": "v2", "verdict": "accept", "source": "c2", "at": 1}]},
    ]
    votes = votes_for_transcripts(transcripts, AbbreviationTable())
    assert [v.kind for v in votes] == ["transcript", "accept"]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.agreement == 1 and r.n_votes == 2
    assert r.tier is Tier.ALMOST_CONFIDENT


def test_reject_votes_dilute_agreement():
    transcripts = [
        {"text": "Silvia", "volunteer": "v1", "at": 0, "source": "c1",
         "verifications": [{"volunteer": "v2", "verdict": "reject", "source": "c2", "at": 1}]},
    ]
    votes = votes_for_transcripts(transcripts, AbbreviationTable())
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.agreement == Fraction(1, 2)
    assert r.n_votes == 2


def test_tie_broken_by_earliest_transcript():
    votes = [tvote("aaaa", "v1", at=10, source="c1"), tvote("bbbb", "v2", at=5, source="c2")]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.consensus_text == "bbbb"


def test_consensus_text_most_frequent_raw_then_lexicographic():
    votes = [tvote("ARLEQUIN", "v1", 0, "c1"), tvote("Arlequin", "v2", 1, "c2"),
             tvote("Arlequin", "v3", 2, "c3")]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.consensus_text == "Arlequin"
    votes = [tvote("ARLEQUIN", "v1", 0, "c1"), tvote("Arlequin", "v2", 1, "c2")]
    r = consensus_transcript(votes, Fraction(9, 10))
    assert r.consensus_text == "ARLEQUIN"  # tie -> lexicographically smallest


def test_consensus_deterministic_under_permutation():
    votes = [tvote("Timon", "v1", 3, "c1"), tvote("Timon", "v2", 1, "c2"),
             tvote("Timpn", "v3", 2, "c3"), tvote("Le Bal", "v4", 0, "c4")]
    base = consensus_transcript(votes, Fraction(9, 10))
    for perm in itertools.permutations(votes):
        r = consensus_transcript(list(perm), Fraction(9, 10))
        assert (r.consensus_text, r.agreement, r.tier) == (base.consensus_text, base.agreement, base.tier)


def test_consensus_classes_match_brute_force_over_200_random_cases():
    rng = random.Random(2024)
    words = ["timon", "timpn", "timon.", "le bal", "le bol", "silvia", "sylvia", "x"]
    theta = Fraction(9, 10)
    for _ in range(200):
        texts = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        normed = [normalize(t) for t in texts]
        got = consensus_classes(normed, theta)
        uniques = sorted(set(normed))
        oracle = brute_force_components(uniques, lambda a, b: similarity(a, b) >= theta)
        oracle_sets = sorted(frozenset(uniques[i] for i in comp) for comp in oracle)
        assert sorted(frozenset(c) for c in got) == oracle_sets


@given(st.lists(st.sampled_from(["timon", "timpn", "agnes", "le bal"]), min_size=1, max_size=6),
       st.integers(0, 1000))
@settings(max_examples=300, deadline=None)
def test_monotonicity_extra_consensus_vote_never_demotes(texts, salt):
    votes = [tvote(t, f"v{i}", at=i, source=f"c{i}") for i, t in enumerate(texts)]
    before = consensus_transcript(votes, Fraction(9, 10))
    extra = tvote(before.consensus_text, f"v{salt + 100}", at=1000 + salt, source=f"c{salt + 100}")
    after = consensus_transcript(votes + [extra], Fraction(9, 10))
    assert after.agreement >= before.agreement
    assert TIER_RANK[after.tier] >= TIER_RANK[before.tier]
    assert after.consensus_text == before.consensus_text


# -- page consensus ------------------------------------------------------------------

def test_page_consensus_majority():
    pc = page_consensus(["recettes", "recettes", "depenses"])
    assert pc.category == "recettes"
    assert pc.agreement == Fraction(2, 3)
    assert pc.tier is Tier.FULLY_CONFIDENT


def test_page_consensus_tie_is_questionable():
    pc = page_consensus(["a", "b"])
    assert pc.category is None
    assert pc.tier is Tier.QUESTIONABLE


def test_page_consensus_no_votes():
    pc = page_consensus([])
    assert pc.category is None and pc.n_votes == 0
    assert pc.tier is Tier.QUESTIONABLE


def test_page_consensus_strict_almost_band():
    # 2 of 3: agreement 2/3 > 1/2 but only FULL at >= 3 votes and >= 2/3
    pc = page_consensus(["a", "a", "b"])
    assert pc.tier is Tier.FULLY_CONFIDENT
    pc = page_consensus(["a", "a"])  # 2 votes, agreement 1
    assert pc.tier is Tier.ALMOST_CONFIDENT
    pc = page_consensus(["a", "a", "b", "b"])  # tie at 1/2: no category
    assert pc.category is None and pc.tier is Tier.QUESTIONABLE


def test_page_consensus_noise_simulation_recovers_truth():
    # 1k pages, 5 voters, 5% category noise: >= 95% fully confident with truth
    rng = random.Random(42)
    cats = ["recettes", "depenses", "distribution", "autre"]
    hits = 0
    for _ in range(1000):
        true = rng.choice(cats)
        votes = [
            rng.choice([c for c in cats if c != true]) if rng.random() < 0.05 else true
            for _ in range(5)
        ]
        pc = page_consensus(votes)
        if pc.tier is Tier.FULLY_CONFIDENT and pc.category == true:
            hits += 1
    assert hits >= 950


# -- agreement score --------------------------------------------------------------

def test_agreement_score_all_identical():
    assert agreement_score([["abc", "abc"], ["x", "x", "x"]]) == 1


def test_agreement_score_zero():
    assert agreement_score([["abc", ""]]) == 0


def test_agreement_score_mixed_cluster():
    # pairs: (kitten,sitting)=4/7, (kitten,kitten)=1, (sitting,kitten)=4/7
    score = agreement_score([["kitten", "sitting", "kitten"]])
    assert score == Fraction(15, 21)
    assert float(score) == pytest.approx(0.7143, abs=1e-4)


def test_agreement_score_no_qualifying_cluster():
    assert agreement_score([["only one"]]) is None


# -- the cook stage -----------------------------------------------------------------

def cooked_store(seed=1, **kw):
    params = SynthParams(**{"n_registers": 1, "pages_per_register": 3, "n_volunteers": 3, **kw})
    lines, truth = generate(seed, params)
    store = Store()
    subjects, classifications, _ = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    store.set_baseline(Stage.CS)
    run_etl(store, Config())
    return store, truth


def test_run_cook_zero_noise_everything_fully_confident():
    store, truth = cooked_store()
    report = run_cook(store, Config())
    assert report.clusters == 3 * 5
    assert report.cooked_transcripts == report.clusters
    assert report.untranscribed_clusters == []
    for _, p in store.scan(Stage.COOKED, "cooked_transcript"):
        assert p["tier"] == "fully_confident"
        assert p["agreement"] == 1.0
    for _, p in store.scan(Stage.COOKED, "cooked_page"):
        assert p["tier"] == "fully_confident"


def test_run_cook_consensus_equals_truth_zero_noise():
    store, truth = cooked_store(seed=8)
    run_cook(store, Config())
    for _, ct in store.scan(Stage.COOKED, "cooked_transcript"):
        cluster = store.get_by_key(ct["cluster"])
        member_mark = store.get_by_key(cluster["members"][0])
        region = truth["classifications"][member_mark["source"]]["region"]
        assert ct["consensus_text"] == truth["regions"][region]["text"]


def test_cook_does_not_touch_stages_0_and_1():
    store, _ = cooked_store(seed=5, char_noise=0.05)
    d0, d1 = store.stage_digest(Stage.CS), store.stage_digest(Stage.RAW)
    run_cook(store, Config())
    assert store.stage_digest(Stage.CS) == d0
    assert store.stage_digest(Stage.RAW) == d1


def test_cook_idempotent():
    store, _ = cooked_store(seed=6)
    run_cook(store, Config())
    digest = store.stage_digest(Stage.COOKED)
    n_edges = len(store.edges)
    run_cook(store, Config())
    assert store.stage_digest(Stage.COOKED) == digest
    assert len(store.edges) == n_edges


def test_cook_requires_etl_first():
    from recital.etl import StageStateError
    with pytest.raises(StageStateError):
        run_cook(Store(), Config())


def test_untranscribed_cluster_reported():
    import json
    lines = [
        json.dumps({"type": "subject", "id": "s-r1", "kind": "root_register", "parent": None,
                    "meta": {"declared_pages": 1}, "created_at": "2020-01-01T00:00:00Z"}),
        json.dumps({"type": "subject", "id": "s-p1", "kind": "page", "parent": "s-r1",
                    "meta": {"seq": 1}, "created_at": "2020-01-01T00:00:01Z"}),
        json.dumps({"type": "classification", "id": "c-m", "subject": "s-p1", "volunteer": "v1",
                    "task": "mark", "payload": {"box": [0.1, 0.1, 0.2, 0.1], "tag": "play"},
                    "created_at": "2020-01-01T00:01:00Z"}),
    ]
    store = Store()
    subjects, classifications, _ = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    run_etl(store, Config())
    report = run_cook(store, Config())
    assert report.clusters == 1
    assert report.cooked_transcripts == 0
    assert len(report.untranscribed_clusters) == 1


def test_questionable_records_land_in_review_queue():
    store, _ = cooked_store(seed=9, n_volunteers=1)  # single volunteer: everything questionable
    run_cook(store, Config())
    assert store.review_items
    assert all(i.reason == "questionable_tier" for i in store.review_items)


def test_tier_partition_is_exhaustive():
    store, _ = cooked_store(seed=10, char_noise=0.08)
    report = run_cook(store, Config())
    valid = {t.value for t in Tier}
    n = 0
    for kind in ("cooked_transcript", "cooked_page"):
        for _, p in store.scan(Stage.COOKED, kind):
            assert p["tier"] in valid
            n += 1
    assert sum(report.tier_counts.values()) == n
