"""REST exposure of the whole data model.

Read endpoints are pure; the only mutations are review resolutions, which
append superseding records under the store's single-writer rule. Responses
are JSON with stable field names; errors carry machine-readable codes.
"""

from __future__ import annotations

import threading

from fastapi import Body, FastAPI, Header, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from recital.config import Config
from recital.progress import compute_progress
from recital.provenance import lineage, reliability_summary
from recital.review import ConflictError, ResolutionError, list_review_items, resolve_review_item
from recital.store import RecordId, Stage, Store, UnknownRecordError
from recital.surrogate import layout_reconstitution, render_svg, text_reconstitution
from recital.textnorm import AbbreviationTable

MAX_LIMIT = 1000
DEFAULT_LIMIT = 100

# one list route per stored kind; the coverage test walks this map
ROUTE_COVERAGE = {
    ("cs", "subject"): "/api/subjects",
    ("cs", "classification"): "/api/classifications",
    ("raw", "register"): "/api/registers",
    ("raw", "page"): "/api/pages",
    ("raw", "mark"): "/api/marks",
    ("raw", "transcript"): "/api/transcripts",
    ("cooked", "mark_cluster"): "/api/clusters",
    ("cooked", "cooked_transcript"): "/api/cooked/transcripts",
    ("cooked", "cooked_page"): "/api/cooked/pages",
    ("domain", "canonical_entity"): "/api/entities",
    ("domain", "link_decision"): "/api/links",
    ("domain", "show"): "/api/shows",
    ("domain", "financial_entry"): "/api/finances",
}


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(store: Store, config: Config) -> FastAPI:
    app = FastAPI(title="recital workshop api", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    write_lock = threading.Lock()
    abbrev_path = config.get("abbrev.path")
    table = AbbreviationTable.load(abbrev_path) if abbrev_path else AbbreviationTable()

    @app.exception_handler(UnknownRecordError)
    async def unknown_record(request: Request, exc: UnknownRecordError):
        return JSONResponse(status_code=404, content={"detail": {"code": "unknown_record", "message": str(exc)}})

    def page_params(offset: int, limit: int) -> tuple[int, int]:
        if offset < 0 or limit < 1:
            raise _error(400, "bad_pagination", "offset must be >= 0 and limit >= 1")
        return offset, min(limit, MAX_LIMIT)

    def record_out(rid: RecordId, payload: dict) -> dict:
        out = {"key": rid.key, "serial": rid.serial, **payload}
        if rid.stage in (Stage.COOKED, Stage.DOMAIN):
            superseder = store.superseded_by(rid)
            out["superseded_by"] = superseder.key if superseder else None
        return out

    def listing(stage: Stage, kind: str, offset: int, limit: int, where=None,
                live_only: bool = False) -> dict:
        def predicate(payload):
            return where is None or where(payload)
        rows = []
        matched = 0
        for rid, payload in store.scan(stage, kind):
            if live_only and not store.is_live(rid):
                continue
            if not predicate(payload):
                continue
            if matched >= offset and len(rows) < limit:
                rows.append(record_out(rid, payload))
            matched += 1
        return {"items": rows, "offset": offset, "limit": limit, "total": matched}

    def detail(stage: Stage, kind: str, serial: int) -> dict:
        rid = RecordId(stage, kind, serial)
        store.get(rid)
        live = store.current(rid)
        out = record_out(live, store.get(live))
        if live != rid:
            out["resolved_from"] = rid.key
        return out

    # -- stage 0 -----------------------------------------------------------

    @app.get("/api/subjects")
    def subjects(offset: int = 0, limit: int = DEFAULT_LIMIT, kind: str | None = None):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["kind"] == kind) if kind else None
        return listing(Stage.CS, "subject", offset, limit, where)

    @app.get("/api/classifications")
    def classifications(offset: int = 0, limit: int = DEFAULT_LIMIT,
                        volunteer: str | None = None, task: str | None = None):
        offset, limit = page_params(offset, limit)

        def where(p):
            return (volunteer is None or p["volunteer"] == volunteer) and \
                   (task is None or p["task"] == task)
        return listing(Stage.CS, "classification", offset, limit, where)

    # -- stage 1 -----------------------------------------------------------

    @app.get("/api/registers")
    def registers(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.RAW, "register", offset, limit)

    def scoped_agreement(page_keys: list[str]) -> dict:
        from recital.cook import agreement_score, collect_cluster_texts

        score = agreement_score(collect_cluster_texts(store, page_keys, table))
        if score is None:
            return {"transcript_agreement": None, "transcript_agreement_frac": None}
        return {"transcript_agreement": float(score), "transcript_agreement_frac": str(score)}

    @app.get("/api/registers/{serial}")
    def register_detail(serial: int):
        rid = RecordId(Stage.RAW, "register", serial)
        out = detail(Stage.RAW, "register", serial)
        pages = [p_rid.key for p_rid, p in store.scan(Stage.RAW, "page")
                 if p["register"] == rid.key]
        out.update(scoped_agreement(pages))
        return out

    @app.get("/api/registers/{serial}/pages")
    def register_pages(serial: int, offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        rid = RecordId(Stage.RAW, "register", serial)
        store.get(rid)
        return listing(Stage.RAW, "page", offset, limit, lambda p: p["register"] == rid.key)

    @app.get("/api/pages")
    def pages(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.RAW, "page", offset, limit)

    @app.get("/api/pages/{serial}")
    def page_detail(serial: int):
        rid = RecordId(Stage.RAW, "page", serial)
        out = detail(Stage.RAW, "page", serial)
        out.update(scoped_agreement([rid.key]))
        return out

    @app.get("/api/pages/{serial}/marks")
    def page_marks(serial: int, offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        rid = RecordId(Stage.RAW, "page", serial)
        store.get(rid)
        return listing(Stage.RAW, "mark", offset, limit, lambda p: p["page"] == rid.key)

    @app.get("/api/pages/{serial}/clusters")
    def page_clusters(serial: int, offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        rid = RecordId(Stage.RAW, "page", serial)
        store.get(rid)
        return listing(Stage.COOKED, "mark_cluster", offset, limit,
                       lambda p: p["page"] == rid.key)

    @app.get("/api/pages/{serial}/transcripts")
    def page_transcripts(serial: int, offset: int = 0, limit: int = DEFAULT_LIMIT,
                         tier: str | None = None):
        offset, limit = page_params(offset, limit)
        rid = RecordId(Stage.RAW, "page", serial)
        store.get(rid)

        def where(p):
            return p["page"] == rid.key and (tier is None or p["tier"] == tier)
        return listing(Stage.COOKED, "cooked_transcript", offset, limit, where, live_only=True)

    @app.get("/api/pages/{serial}/surrogate")
    def page_surrogate(serial: int, mode: str = "text"):
        rid = RecordId(Stage.RAW, "page", serial)
        store.get(rid)
        if mode == "text":
            return {"page": rid.key, "mode": "text",
                    "text": text_reconstitution(store, rid, config)}
        if mode == "layout":
            return layout_reconstitution(store, rid, config).to_payload()
        if mode == "svg":
            doc = layout_reconstitution(store, rid, config)
            return Response(content=render_svg(doc), media_type="image/svg+xml")
        raise _error(400, "bad_mode", "mode must be text, layout or svg")

    @app.get("/api/marks")
    def marks(offset: int = 0, limit: int = DEFAULT_LIMIT, volunteer: str | None = None):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["volunteer"] == volunteer) if volunteer else None
        return listing(Stage.RAW, "mark", offset, limit, where)

    @app.get("/api/transcripts")
    def transcripts(offset: int = 0, limit: int = DEFAULT_LIMIT, volunteer: str | None = None):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["volunteer"] == volunteer) if volunteer else None
        return listing(Stage.RAW, "transcript", offset, limit, where)

    @app.get("/api/transcripts/{serial}")
    def transcript_detail(serial: int):
        return detail(Stage.RAW, "transcript", serial)

    # -- stage 2 -----------------------------------------------------------

    @app.get("/api/clusters")
    def clusters(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.COOKED, "mark_cluster", offset, limit)

    @app.get("/api/clusters/{serial}")
    def cluster_detail(serial: int):
        return detail(Stage.COOKED, "mark_cluster", serial)

    @app.get("/api/cooked/transcripts")
    def cooked_transcripts(offset: int = 0, limit: int = DEFAULT_LIMIT,
                           tier: str | None = None, live: bool = True):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["tier"] == tier) if tier else None
        return listing(Stage.COOKED, "cooked_transcript", offset, limit, where, live_only=live)

    @app.get("/api/cooked/transcripts/{serial}")
    def cooked_transcript_detail(serial: int):
        return detail(Stage.COOKED, "cooked_transcript", serial)

    @app.get("/api/cooked/pages")
    def cooked_pages(offset: int = 0, limit: int = DEFAULT_LIMIT,
                     tier: str | None = None, live: bool = True):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["tier"] == tier) if tier else None
        return listing(Stage.COOKED, "cooked_page", offset, limit, where, live_only=live)

    # -- stage 3 -----------------------------------------------------------

    @app.get("/api/entities")
    def entities(offset: int = 0, limit: int = DEFAULT_LIMIT, kind: str | None = None):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["kind"] == kind) if kind else None
        return listing(Stage.DOMAIN, "canonical_entity", offset, limit, where)

    @app.get("/api/plays")
    def plays(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.DOMAIN, "canonical_entity", offset, limit,
                       lambda p: p["kind"] == "play")

    @app.get("/api/persons")
    def persons(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.DOMAIN, "canonical_entity", offset, limit,
                       lambda p: p["kind"] == "person")

    @app.get("/api/links")
    def links(offset: int = 0, limit: int = DEFAULT_LIMIT, status: str | None = None):
        offset, limit = page_params(offset, limit)
        where = (lambda p: p["status"] == status) if status else None
        return listing(Stage.DOMAIN, "link_decision", offset, limit, where, live_only=True)

    @app.get("/api/shows")
    def shows(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.DOMAIN, "show", offset, limit, live_only=True)

    @app.get("/api/shows/{serial}")
    def show_detail(serial: int):
        rid = RecordId(Stage.DOMAIN, "show", serial)
        out = detail(Stage.DOMAIN, "show", serial)
        out["entries"] = [
            record_out(e_rid, p)
            for e_rid, p in store.scan(Stage.DOMAIN, "financial_entry",
                                       where=lambda p: p["show"] == rid.key)
            if store.is_live(e_rid)
        ]
        return out

    @app.get("/api/finances")
    def finances(offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.DOMAIN, "financial_entry", offset, limit, live_only=True)

    # -- volunteers, progress, snapshot --------------------------------------

    @app.get("/api/volunteers")
    def volunteers():
        return {"items": compute_progress(store)["volunteers"]}

    @app.get("/api/volunteers/{volunteer_id}/activity")
    def volunteer_activity(volunteer_id: str, offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        return listing(Stage.CS, "classification", offset, limit,
                       lambda p: p["volunteer"] == volunteer_id)

    @app.get("/api/progress")
    def progress():
        return compute_progress(store)

    @app.get("/api/snapshot")
    def snapshot():
        snap = store.snapshot()
        return {"counts": snap.counts, "digests": snap.digests}

    @app.get("/api/lineage/{stage}/{kind}/{serial}")
    def lineage_endpoint(stage: str, kind: str, serial: int):
        rid = RecordId.parse(f"{stage}/{kind}/{serial}")
        graph = lineage(store, rid)
        return {
            "root": graph.root,
            "nodes": graph.nodes,
            "edges": graph.edges,
            "external_leaves": graph.external_leaves,
        }

    @app.get("/api/reliability/{stage}/{kind}/{serial}")
    def reliability_endpoint(stage: str, kind: str, serial: int):
        rid = RecordId.parse(f"{stage}/{kind}/{serial}")
        summary = reliability_summary(store, rid)
        return {
            "record": rid.key,
            "volunteers": summary.volunteers,
            "algorithm_activities": summary.algorithm_activities,
            "curator_touched": summary.curator_touched,
            "tier": summary.tier,
        }

    # -- review queue ---------------------------------------------------------

    @app.get("/api/review")
    def review_list(status: str | None = None, reason: str | None = None,
                    offset: int = 0, limit: int = DEFAULT_LIMIT):
        offset, limit = page_params(offset, limit)
        items = list_review_items(store, status=status, reason=reason)
        return {"items": items[offset:offset + limit], "offset": offset,
                "limit": limit, "total": len(items)}

    @app.get("/api/review/{serial}")
    def review_detail(serial: int):
        item = store.get_review_item(serial)
        res = store.resolutions.get(serial)
        target = RecordId.parse(item.target)
        return {
            "id": item.serial,
            "target": item.target,
            "target_record": record_out(target, store.get(target)),
            "reason": item.reason,
            "status": store.item_status(serial),
            "created_at": item.created_at,
            "curator": res.curator if res else None,
            "superseding": res.superseding if res else None,
        }

    @app.post("/api/review/{serial}")
    def review_resolve(serial: int, body: dict = Body(...),
                       x_curator_token: str | None = Header(default=None)):
        expected = config.get("api.curator_token")
        if expected and x_curator_token != expected:
            raise _error(401, "bad_token", "curator token missing or wrong")
        action = body.get("action", "")
        curator = body.get("curator") or "curator"
        resolution = {k: v for k, v in body.items() if k in ("text", "category", "entity")}
        with write_lock:
            try:
                outcome = resolve_review_item(store, serial, action, curator, resolution, table)
            except ConflictError as exc:
                raise _error(409, "conflict", str(exc)) from exc
            except ResolutionError as exc:
                raise _error(400, "bad_resolution", str(exc)) from exc
        return {
            "id": outcome.item_serial,
            "status": outcome.status,
            "superseding": outcome.superseding.key,
        }

    @app.get("/api/routes")
    def routes():
        return {"coverage": {f"{s}/{k}": route for (s, k), route in ROUTE_COVERAGE.items()}}

    return app


def serve(config: Config) -> None:
    """Open the store named by the configuration and run the service."""
    import uvicorn

    store = Store(config.get("store.path"))
    app = create_app(store, config)
    uvicorn.run(app, host="127.0.0.1", port=config.get_int("api.port"), log_level="warning")
