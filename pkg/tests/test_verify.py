from recital.config import Config
from recital.cook import run_cook
from recital.etl import run_etl
from recital.ingest import ingest_into_store, parse_cs_export
from recital.store import RecordId, Stage, Store
from recital.synth import SynthParams, generate
from recital.verify import render_table, run_verify


def pipeline_store(seed=2, **kw):
    params = SynthParams(**{"n_registers": 1, "pages_per_register": 3, "n_volunteers": 3, **kw})
    lines, _ = generate(seed, params)
    store = Store()
    subjects, classifications, _ = parse_cs_export(lines)
    ingest_into_store(store, subjects, classifications)
    store.set_baseline(Stage.CS)
    config = Config()
    run_etl(store, config)
    run_cook(store, config)
    return store


def test_empty_store_passes():
    results = run_verify(Store())
    assert all(r.ok for r in results)


def test_healthy_pipeline_passes():
    store = pipeline_store()
    results = run_verify(store)
    assert all(r.ok for r in results), render_table(results)
    names = {r.name for r in results}
    assert {"append_only_cs", "append_only_raw", "provenance_totality",
            "provenance_acyclicity", "provenance_stage_constraint",
            "tier_partition", "cardinality", "lineage_termination"} <= names


def test_orphan_cooked_record_fails_totality():
    store = pipeline_store()
    store.append(Stage.COOKED, "cooked_transcript", {"consensus_text": "x", "tier": "questionable"})
    results = {r.name: r for r in run_verify(store)}
    assert not results["provenance_totality"].ok
    assert not results["lineage_termination"].ok


def test_extra_raw_mark_fails_cardinality():
    store = pipeline_store()
    store.append(Stage.RAW, "mark", {"page": "raw/page/1", "box": [0, 0, 0.1, 0.1],
                                     "tag": "x", "volunteer": "v", "source": "c-x"})
    results = {r.name: r for r in run_verify(store)}
    assert not results["cardinality"].ok
    # and the baseline audit catches the stage-1 write too
    assert not results["append_only_raw"].ok


def test_bad_tier_fails_partition():
    store = pipeline_store()
    rid = store.append(Stage.COOKED, "cooked_page", {"page": "raw/page/1", "tier": "sure!"})
    results = {r.name: r for r in run_verify(store)}
    assert not results["tier_partition"].ok


def test_render_table_format():
    table = render_table(run_verify(Store()))
    assert "append_only_cs" in table
    assert "pass" in table
