"""Pipeline driver: one executable, one subcommand per stage.

Exit codes: 0 success, 2 bad arguments, 3 stage precondition unmet,
4 store or lock errors. Every stage run records a provenance activity
carrying the digest of the active configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

from recital.config import Config, ConfigError
from recital.util import now_ms

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_STORE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recital",
        description="Crowdsourced register curation pipeline: ingest, refine, link, serve.",
    )
    parser.add_argument("--config", help="configuration file (or $RECITAL_CONFIG)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("config", help="show configuration")
    p.add_argument("--defaults", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic export corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--registers", type=int, default=2)
    p.add_argument("--pages", type=int, default=20)
    p.add_argument("--marks", type=int, default=5)
    p.add_argument("--volunteers", type=int, default=3)
    p.add_argument("--char-noise", type=float, default=0.0)
    p.add_argument("--skip", type=float, default=0.0)
    p.add_argument("--box-jitter", type=float, default=0.0)
    p.add_argument("--duplicates", type=float, default=0.0)
    p.add_argument("--category-noise", type=float, default=0.0)
    p.add_argument("--verify-rate", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--registry")

    p = sub.add_parser("ingest", help="parse an export file into stage 0")
    p.add_argument("file")

    sub.add_parser("etl", help="build the raw artifact chain (stage 1)")
    sub.add_parser("cook", help="consensus and confidence tiers (stage 2)")

    p = sub.add_parser("link", help="record linkage and domain assembly (stage 3)")
    p.add_argument("--registry", help="registry file (overrides registry.path)")

    p = sub.add_parser("surrogate", help="write page surrogates")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--page", type=int)
    group.add_argument("--all", action="store_true")
    p.add_argument("--dir", default="surrogates")
    p.add_argument("--svg", action="store_true")

    sub.add_parser("serve", help="run the REST service")
    sub.add_parser("progress", help="print progress indicators")
    sub.add_parser("verify", help="run the whole-store invariant suite")

    p = sub.add_parser("dump", help="write the store encoding to stdout or a file")
    p.add_argument("--format", choices=("store", "edges", "prov-json"), default="store")
    p.add_argument("--out")

    p = sub.add_parser("restore", help="rebuild the store file from a dump")
    p.add_argument("file")
    return parser


@contextlib.contextmanager
def _store_lock(store_path: Path):
    import fcntl

    lock_path = store_path.with_suffix(store_path.suffix + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(lock_path, "w")
    try:
        fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError:
        fh.close()
        raise StoreBusy(f"store {store_path} is locked by another process")
    try:
        yield
    finally:
        fcntl.flock(fh, fcntl.LOCK_UN)
        fh.close()


class StoreBusy(Exception):
    pass


def _open_store(config: Config):
    from recital.store import Store

    return Store(config.get("store.path"))


def _reports_dir(config: Config) -> Path:
    d = Path(config.get("reports.dir"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_report(config: Config, name: str, rows: list, summary: dict) -> Path:
    path = _reports_dir(config) / f"{name}.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        fh.write(json.dumps({"summary": summary}, ensure_ascii=False) + "\n")
    return path


def _cmd_synth(args, config: Config) -> int:
    from recital.synth import SynthParams, write_corpus

    params = SynthParams(
        n_registers=args.registers, pages_per_register=args.pages,
        marks_per_page=args.marks, n_volunteers=args.volunteers,
        char_noise=args.char_noise, skip=args.skip, box_jitter=args.box_jitter,
        duplicate_rate=args.duplicates, category_noise=args.category_noise,
        verify_rate=args.verify_rate,
    )
    try:
        truth = write_corpus(args.seed, params, args.out, args.truth, args.registry)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    counts = truth["counts"]
    print(f"wrote {args.out}: {counts['subjects']} subjects, "
          f"{counts['classifications']} classifications "
          f"({counts['injected_duplicates']} duplicate runs injected)")
    return EXIT_OK


def _cmd_ingest(args, config: Config) -> int:
    from recital.ingest import flag_assignment_anomalies, ingest_into_store, parse_cs_export
    from recital.store import Stage

    path = Path(args.file)
    if not path.exists():
        print(f"error: no such file {path}", file=sys.stderr)
        return EXIT_USAGE
    with _store_lock(Path(config.get("store.path"))), _open_store(config) as store:
        activity = store.begin_activity("ingest", {
            "config_digest": config.digest(), "file": str(path),
        }, now_ms())
        with open(path, encoding="utf-8") as fh:
            subjects, classifications, report = parse_cs_export(fh)
        n_subj, n_cls = ingest_into_store(store, subjects, classifications)
        flags = flag_assignment_anomalies(classifications, {s.external_id for s in subjects})
        report.duplicates_flagged = sum(1 for _, f in flags if "duplicate_run" in f)
        report.orphans_flagged = sum(1 for _, f in flags if "orphan" in f)
        store.end_activity(activity, now_ms())
        store.set_baseline(Stage.CS)
        store.flush()
        rows = [{"line": ln, "reason": reason} for ln, reason in report.rejected]
        summary = {
            "accepted": report.accepted, "rejected": len(report.rejected),
            "new_subjects": n_subj, "new_classifications": n_cls,
            "duplicates_flagged": report.duplicates_flagged,
            "orphans_flagged": report.orphans_flagged,
        }
        report_path = _write_report(config, "ingest-report", rows, summary)
    print(f"ingested {report.accepted} records "
          f"({len(report.rejected)} rejected, report: {report_path})")
    return EXIT_OK


def _cmd_etl(args, config: Config) -> int:
    from recital.etl import StageStateError, cardinality_check, run_etl

    with _store_lock(Path(config.get("store.path"))), _open_store(config) as store:
        try:
            report = run_etl(store, config)
        except StageStateError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        check = cardinality_check(store, report)
        rows = [{"classification": cid, "reason": reason} for cid, reason in report.excluded]
        summary = {**report.counts, "facts": report.facts,
                   "valid_classifications": report.valid_classifications,
                   "cardinality_ok": check.ok}
        report_path = _write_report(config, "etl-report", rows, summary)
    print(f"etl: {report.facts} raw facts from {report.valid_classifications} valid runs, "
          f"{len(report.excluded)} excluded (report: {report_path})")
    if not check.ok:
        print("cardinality check FAILED:", *check.discrepancies[:5], file=sys.stderr)
        return EXIT_STORE
    return EXIT_OK


def _cmd_cook(args, config: Config) -> int:
    from recital.etl import StageStateError
    from recital.cook import run_cook

    with _store_lock(Path(config.get("store.path"))), _open_store(config) as store:
        try:
            report = run_cook(store, config)
        except StageStateError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        rows = [{"untranscribed_cluster": key} for key in report.untranscribed_clusters]
        report_path = _write_report(config, "cook-report", rows, report.to_payload())
    print(f"cook: {report.clusters} clusters, {report.cooked_transcripts} consensus "
          f"transcripts, tiers {report.tier_counts} (report: {report_path})")
    return EXIT_OK


def _cmd_link(args, config: Config) -> int:
    from recital.etl import StageStateError
    from recital.linkage import build_domain, load_registry

    registry_path = args.registry or config.get("registry.path")
    if not registry_path:
        print("error: no registry file (set registry.path or pass --registry)", file=sys.stderr)
        return EXIT_USAGE
    try:
        registry = load_registry(registry_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with _store_lock(Path(config.get("store.path"))), _open_store(config) as store:
        try:
            report = build_domain(store, config, registry)
        except StageStateError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        rows = [{"questionable_skipped": k} for k in report.questionable_skipped]
        report_path = _write_report(config, "link-report", rows, report.to_payload())
    print(f"link: {report.shows} shows ({report.dated_shows} dated), "
          f"{report.financial_entries} financial entries, "
          f"links {report.link_status_counts} (report: {report_path})")
    return EXIT_OK


def _cmd_surrogate(args, config: Config) -> int:
    from recital.etl import StageStateError
    from recital.store import Stage
    from recital.surrogate import layout_reconstitution, render_svg, text_reconstitution

    out_dir = Path(args.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _store_lock(Path(config.get("store.path"))), _open_store(config) as store:
        if store.count(Stage.COOKED, "mark_cluster") == 0 and store.count(Stage.RAW, "page") == 0:
            print("error: nothing cooked yet; run cook first", file=sys.stderr)
            return EXIT_PRECONDITION
        activity = store.begin_activity("surrogate", {
            "config_digest": config.digest(), "svg": bool(args.svg),
        }, now_ms())
        pages = store.scan(Stage.RAW, "page")
        if args.page is not None:
            pages = [(rid, p) for rid, p in pages if rid.serial == args.page]
            if not pages:
                print(f"error: no such page {args.page}", file=sys.stderr)
                return EXIT_USAGE
        n = 0
        for rid, _ in pages:
            doc = layout_reconstitution(store, rid, config)
            base = out_dir / f"page-{rid.serial:05d}"
            base.with_suffix(".txt").write_text(
                text_reconstitution(store, rid, config) + "\n", encoding="utf-8")
            base.with_suffix(".layout.json").write_text(doc.serialize() + "\n", encoding="utf-8")
            if args.svg:
                base.with_suffix(".svg").write_text(render_svg(doc) + "\n", encoding="utf-8")
            n += 1
        store.end_activity(activity, now_ms())
        store.flush()
    print(f"surrogates for {n} page(s) in {out_dir}")
    return EXIT_OK


def _cmd_progress(args, config: Config) -> int:
    from recital.progress import compute_progress

    with _open_store(config) as store:
        progress = compute_progress(store)
    for task, stats in progress["tasks"].items():
        print(f"{task:<11} {stats['done']}/{stats['total']}  "
              f"({stats['completeness_frac']} = {stats['completeness']:.3f})")
    print("tiers:", progress["tier_distribution"])
    print("volunteers:", len(progress["volunteers"]))
    return EXIT_OK


def _cmd_verify(args, config: Config) -> int:
    from recital.verify import render_table, run_verify

    with _open_store(config) as store:
        results = run_verify(store)
    print(render_table(results))
    return EXIT_OK if all(r.ok for r in results) else 1


def _cmd_serve(args, config: Config) -> int:
    from recital.api import serve

    with _store_lock(Path(config.get("store.path"))):
        serve(config)
    return EXIT_OK


def _cmd_dump(args, config: Config) -> int:
    from recital.provenance import export_edges, export_w3c_style

    with _open_store(config) as store:
        if args.format == "store":
            lines = store.dump_lines()
        elif args.format == "edges":
            lines = (json.dumps(e, ensure_ascii=False) for e in export_edges(store))
        else:
            lines = iter([json.dumps(export_w3c_style(store), ensure_ascii=False, indent=1)])
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                for line in lines:
                    fh.write(line + "\n")
        else:
            for line in lines:
                print(line)
    return EXIT_OK


def _cmd_restore(args, config: Config) -> int:
    from recital.store import Store

    src = Path(args.file)
    if not src.exists():
        print(f"error: no such file {src}", file=sys.stderr)
        return EXIT_USAGE
    target = Path(config.get("store.path"))
    with _store_lock(target):
        with open(src, encoding="utf-8") as fh:
            store = Store.restore(fh, path=target)
        store.close()
    print(f"restored store at {target}")
    return EXIT_OK


COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "etl": _cmd_etl,
    "cook": _cmd_cook,
    "link": _cmd_link,
    "surrogate": _cmd_surrogate,
    "progress": _cmd_progress,
    "verify": _cmd_verify,
    "serve": _cmd_serve,
    "dump": _cmd_dump,
    "restore": _cmd_restore,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
        overrides[key.strip()] = value.strip()
    try:
        config = Config.load(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "config":
        print(config.dump() if not args.defaults else Config().dump(), end="")
        print(f"# digest: {config.digest()}")
        return EXIT_OK

    from recital.store import StoreError

    try:
        return COMMANDS[args.command](args, config)
    except StoreBusy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except StoreError as exc:
        print(f"store error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except OSError as exc:
        print(f"store error: {exc}", file=sys.stderr)
        return EXIT_STORE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
